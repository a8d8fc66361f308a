"""Dense float64 array arithmetic with a taped reverse mode.

Values are plain ``numpy`` arrays.  A :class:`Tensor` wraps one array plus
the backward rule that produced it.  Every operation accepts optional leading
batch axes; the last two axes are the matrix axes.  Parameters broadcast over
the batch axes and their gradients are summed back to the parameter shape.

Two probes hook into every operation:

* :class:`FlopCounter` counts multiply-accumulates performed by matmul
  (forward and backward).
* :class:`AllocationProbe` records the shape and size of every array placed
  on the tape.

A third, :class:`KinkTracker`, records which side of zero each relu/abs input
lies on, so a finite-difference check can tell when a perturbation crossed a
non-differentiable point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, ShapeError

DTYPE = np.float64

_flop_counters: list["FlopCounter"] = []
_alloc_probes: list["AllocationProbe"] = []
_kink_trackers: list["KinkTracker"] = []


class FlopCounter:
    """Context manager counting matmul multiply-accumulates."""

    def __init__(self):
        self.macs = 0

    def add(self, n):
        self.macs += int(n)

    def __enter__(self):
        _flop_counters.append(self)
        return self

    def __exit__(self, *exc):
        _flop_counters.remove(self)
        return False


class AllocationProbe:
    """Context manager recording every array that enters the tape."""

    def __init__(self):
        self.shapes: list[tuple[int, ...]] = []
        self.total_bytes = 0
        self.max_bytes = 0

    def record(self, arr):
        self.shapes.append(arr.shape)
        self.total_bytes += arr.nbytes
        self.max_bytes = max(self.max_bytes, arr.nbytes)

    def has_square(self, n):
        """True if any recorded array has two or more axes of length >= n."""
        return any(sum(d >= n for d in s) >= 2 for s in self.shapes)

    def __enter__(self):
        _alloc_probes.append(self)
        return self

    def __exit__(self, *exc):
        _alloc_probes.remove(self)
        return False


class KinkTracker:
    """Context manager collecting the sign pattern of every relu/abs input."""

    def __init__(self):
        self.patterns: list[np.ndarray] = []

    def __enter__(self):
        _kink_trackers.append(self)
        return self

    def __exit__(self, *exc):
        _kink_trackers.remove(self)
        return False

    def same_side(self, other):
        return len(self.patterns) == len(other.patterns) and all(
            np.array_equal(a, b) for a, b in zip(self.patterns, other.patterns))


def _track(x):
    if _kink_trackers:
        sign = np.sign(x)
        for t in _kink_trackers:
            t.patterns.append(sign)


def _count(macs):
    for c in _flop_counters:
        c.add(macs)


class Tensor:
    """An array on the tape.  ``grad`` is allocated on first accumulation."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        for probe in _alloc_probes:
            probe.record(self.value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Reverse sweep from this node; each node is visited exactly once."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.value) if seed is None else seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __neg__ = lambda self: mul(self, -1.0)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _swap(x):
    return np.swapaxes(x, -1, -2)


def _macs(a_shape, b_shape):
    lead = np.broadcast_shapes(a_shape[:-2], b_shape[:-2])
    return int(np.prod(lead, dtype=np.int64)) * a_shape[-2] * a_shape[-1] * b_shape[-1]


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from None
    _count(_macs(a.shape, b.shape))
    out_shape = lead + (a.shape[-2], b.shape[-1])

    def backward(g):
        if a.requires_grad:
            _count(_macs(out_shape, _swap(b.value).shape))
            a._accumulate(unbroadcast(g @ _swap(b.value), a.shape))
        if b.requires_grad:
            _count(_macs(_swap(a.value).shape, out_shape))
            b._accumulate(unbroadcast(_swap(a.value) @ g, b.shape))

    return Tensor(a.value @ b.value, parents=(a, b), backward=backward)


def _binary(a, b, fwd, da, db):
    a, b = as_tensor(a), as_tensor(b)
    try:
        value = fwd(a.value, b.value)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(unbroadcast(da(g, a.value, b.value), a.shape))
        if b.requires_grad:
            b._accumulate(unbroadcast(db(g, a.value, b.value), b.shape))

    return Tensor(value, parents=(a, b), backward=backward)


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def transpose(a):
    a = as_tensor(a)
    return Tensor(_swap(a.value), parents=(a,), backward=lambda g: a._accumulate(_swap(g)))


_AXES = {"rows": -2, "cols": -1}


def concat(a, b, axis="cols"):
    """Block concatenation along ``rows`` or ``cols``; batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    ax = _AXES[axis]
    other = -1 if ax == -2 else -2
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[other] != b.shape[other]:
        raise ShapeError(f"concat({axis}): shared dimension differs, {a.shape} vs {b.shape}")
    try:
        lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"concat: batch axes of {a.shape} and {b.shape} do not broadcast") from None
    av = np.broadcast_to(a.value, lead + a.shape[-2:])
    bv = np.broadcast_to(b.value, lead + b.shape[-2:])
    seam = a.shape[ax]

    def backward(g):
        ga, gb = np.split(g, [seam], axis=ax)
        if a.requires_grad:
            a._accumulate(unbroadcast(ga, a.shape))
        if b.requires_grad:
            b._accumulate(unbroadcast(gb, b.shape))

    return Tensor(np.concatenate([av, bv], axis=ax), parents=(a, b), backward=backward)


def softmax(a, axis):
    a = as_tensor(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return Tensor(s, parents=(a,), backward=backward)


def softmax_cols(h):
    """Softmax down each column: every column of the result sums to 1."""
    return softmax(h, axis=-2)


def softmax_rows(h):
    return softmax(h, axis=-1)


def relu(a):
    a = as_tensor(a)
    _track(a.value)
    mask = a.value > 0
    return Tensor(np.where(mask, a.value, 0.0), parents=(a,),
                  backward=lambda g: a._accumulate(g * mask))


def absolute(a):
    # d|x|/dx taken as 0 at x == 0
    a = as_tensor(a)
    _track(a.value)
    sign = np.sign(a.value)
    return Tensor(np.abs(a.value), parents=(a,), backward=lambda g: a._accumulate(g * sign))


def square(a):
    a = as_tensor(a)
    return Tensor(a.value ** 2, parents=(a,), backward=lambda g: a._accumulate(2.0 * g * a.value))


def total(a):
    a = as_tensor(a)
    return Tensor(a.value.sum(), parents=(a,),
                  backward=lambda g: a._accumulate(np.broadcast_to(g, a.shape)))


def mean(a):
    a = as_tensor(a)
    n = a.value.size
    return Tensor(a.value.mean(), parents=(a,),
                  backward=lambda g: a._accumulate(np.broadcast_to(g / n, a.shape)))


def layer_norm(a, eps=1e-5):
    """Normalize the last axis to zero mean, unit variance (no affine terms)."""
    a = as_tensor(a)
    mu = a.value.mean(axis=-1, keepdims=True)
    xc = a.value - mu
    inv = 1.0 / np.sqrt((xc ** 2).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        a._accumulate(inv * (g - gm - y * gy))

    return Tensor(y, parents=(a,), backward=backward)


def grad_check(f, x, eps=1e-5):
    """Max relative error between the taped gradient and central differences.

    ``f`` maps a Tensor to a scalar Tensor.  The error per entry is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    x = np.array(x, dtype=DTYPE)
    t = Tensor(x, requires_grad=True)
    out = f(t)
    if not np.isfinite(out.value).all():
        raise EvaluationError("f is not finite at x")
    out.backward()
    analytic = np.zeros_like(x) if t.grad is None else t.grad
    numeric = np.empty_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = float(f(Tensor(x)).value)
        flat[i] = old - eps
        fm = float(f(Tensor(x)).value)
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"f is not finite near entry {i}")
        numeric.reshape(-1)[i] = (fp - fm) / (2 * eps)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric)), initial=0.0))


@dataclass
class GradCheckReport:
    errors: dict  # name -> max relative error over compared entries
    skipped: dict  # name -> entries whose perturbation crossed a kink
    checked: dict  # name -> entries compared

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def skipped_fraction(self):
        total = sum(self.checked.values()) + sum(self.skipped.values())
        return sum(self.skipped.values()) / total if total else 0.0


def grad_check_report(loss_fn, params, eps=1e-5, names=None, skip_kinks=True):
    """Central-difference check over a dict of named parameter arrays.

    ``loss_fn`` receives a dict of Tensors and returns a scalar Tensor.  With
    ``skip_kinks`` an entry is left out when nudging it by +-eps moves any
    relu/abs input to the other side of zero; central differences are not a
    gradient estimate across such a point.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    names = list(params) if names is None else names
    leaves = {k: Tensor(v, requires_grad=k in names) for k, v in params.items()}
    with KinkTracker() as base:
        out = loss_fn(leaves)
    if not np.isfinite(out.value).all():
        raise EvaluationError("loss is not finite at the given parameters")
    out.backward()
    report = GradCheckReport({}, {}, {})
    for name in names:
        arr = np.array(params[name], dtype=DTYPE)
        analytic = leaves[name].grad if leaves[name].grad is not None else np.zeros_like(arr)
        flat = arr.reshape(-1)
        worst, skipped = 0.0, 0
        for i in range(flat.size):
            old = flat[i]
            vals, crossed = [], False
            for delta in (eps, -eps):
                flat[i] = old + delta
                trial = dict(params)
                trial[name] = arr
                with KinkTracker() as probe:
                    vals.append(float(loss_fn({k: Tensor(v) for k, v in trial.items()}).value))
                crossed = crossed or not probe.same_side(base)
            flat[i] = old
            if not np.isfinite(vals).all():
                raise EvaluationError(f"loss not finite near {name}[{i}]")
            if skip_kinks and crossed:
                skipped += 1
                continue
            num = (vals[0] - vals[1]) / (2 * eps)
            worst = max(worst, abs(analytic.reshape(-1)[i] - num) / max(1.0, abs(num)))
        report.errors[name] = worst
        report.skipped[name] = skipped
        report.checked[name] = flat.size - skipped
    return report


def grad_check_params(loss_fn, params, eps=1e-5, names=None):
    """Like :func:`grad_check` but over a dict of named parameter arrays.

    Returns ``{name: max relative error}``; every entry is compared.
    """
    return grad_check_report(loss_fn, params, eps, names, skip_kinks=False).errors


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(param, grad, state, lr, betas=(0.9, 0.999), eps=1e-8, t=None):
    """One bias-corrected Adam update, in place on ``param`` and ``state``."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(f"adam_step: param {param.shape} vs grad {grad.shape}")
    b1, b2 = betas
    state.t = state.t + 1 if t is None else t
    if state.t < 1:
        raise ValueError("step count must be >= 1")
    state.m *= b1
    state.m += (1 - b1) * grad
    state.v *= b2
    state.v += (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1 ** state.t)
    v_hat = state.v / (1 - b2 ** state.t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, state


@dataclass
class Adam:
    """Adam over a dict of named arrays, updated in place."""

    params: dict
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    state: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.params.items():
            self.state[k] = AdamState(np.zeros_like(v), np.zeros_like(v))

    def step(self, grads):
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                g = np.zeros_like(p)
            adam_step(p, g, self.state[k], self.lr, self.betas, self.eps)
