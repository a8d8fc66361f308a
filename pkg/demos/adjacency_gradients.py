"""Why softmax normalization of an adaptive adjacency is well behaved while
plain row normalization is not."""
import numpy as np

from graphsparse import analysis

rep = analysis.gradient_study(draws=2000, seed=0)
print(f"largest softmax partial over {rep['draws']} draws: {rep['bound_max']:.6f}")
print(f"largest linear partial: {rep['linear_max']:.3g} (min score {rep['linear_max_min_s']:.3g})")

# a single hand-made row: one tiny score blows up the linear partials
s = np.array([[1e-6, 1e-6, 1e-6]])
print("linear jacobian peak", np.abs(analysis.linear_adjacency_jacobian(s)).max())
print("softmax jacobian peak",
      np.abs(analysis.softmax_adjacency_jacobian(analysis.softmax_adjacency(s, np.eye(3)))).max())
