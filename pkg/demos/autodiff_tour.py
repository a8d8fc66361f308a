"""A tour of the tiny autodiff kernel: build a loss, backpropagate, and
confirm the gradient with central differences."""
import numpy as np

from graphsparse import numkernel as nk

rng = np.random.default_rng(0)
params = {"W": rng.normal(size=(4, 3)), "b": rng.normal(size=(1, 3))}
X = rng.normal(size=(5, 4))


def loss(p):
    h = nk.relu(nk.matmul(nk.as_tensor(X), p["W"]) + p["b"])
    return nk.mean(nk.softmax_cols(h) * h)


leaves = {k: nk.Tensor(v, requires_grad=True) for k, v in params.items()}
out = loss(leaves)
out.backward()
print("loss", float(out.value))
print("dL/dW\n", leaves["W"].grad)

rep = nk.grad_check_report(loss, params)
print("max relative error", rep.max_error, "skipped", rep.skipped)

# Adam on a toy quadratic
w = {"x": np.array([[3.0, -2.0]])}
opt = nk.Adam(w, lr=0.1)
for _ in range(200):
    opt.step({"x": 2 * w["x"]})
print("after 200 Adam steps", w["x"])
