"""Comparators: dense adaptive-adjacency GCN (O(N^2)) and historical average."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numkernel as nk
from .errors import DivergenceError, ShapeError
from .rng import SplitMix64


@dataclass(frozen=True)
class DenseGCNConfig:
    N: int
    S: int = 12
    T: int = 12
    d: int = 32
    C: int | None = None
    L: int = 3
    hidden: int | None = None
    embed_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.C is None:
            object.__setattr__(self, "C", self.d)
        if self.hidden is None:
            object.__setattr__(self, "hidden", 4 * self.d)
        for name in ("N", "S", "T", "d", "C", "L", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.embed_std >= 0:
            raise ValueError("embed_std must be non-negative")

    def to_dict(self):
        return asdict(self)


def param_shapes(cfg):
    N, d, C, h = cfg.N, cfg.d, cfg.C, cfg.hidden
    shapes = {"W_in": (cfg.S, d), "E1": (N, C), "E2": (C, N)}
    for l in range(cfg.L):
        shapes[f"l{l}.W"] = (d, d)
        if l < cfg.L - 1:
            shapes[f"l{l}.W_upd"] = (2 * d, d)
    shapes["W_skip"] = (2 * d, h)
    shapes["W_out"] = (h, cfg.T)
    return shapes


def param_count(cfg):
    d, h = cfg.d, cfg.hidden
    return (2 * cfg.N * cfg.C + cfg.S * d + cfg.L * d * d + (cfg.L - 1) * 2 * d * d
            + 2 * d * h + h * cfg.T)


def init_params(cfg):
    rng = SplitMix64(cfg.seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name in ("E1", "E2"):
            # Gaussian node embeddings, as in adaptive-adjacency models
            params[name] = rng.normal(0.0, cfg.embed_std, shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, shape)
    return params


def adjacency(E1, E2):
    """Row-stochastic adaptive adjacency softmax_rows(E1 @ E2) as a Tensor."""
    return nk.softmax_rows(nk.matmul(E1, E2))


def dense_gcn_layer(X, E1, E2, W, A=None):
    """relu(A @ X @ W); materializes the N x N adjacency on purpose."""
    if A is None:
        A = adjacency(E1, E2)
    return nk.relu(nk.matmul(nk.matmul(A, X), W))


class DenseGCN:
    """Same input embedding, skip aggregation and head as GSNet, but each layer
    mixes nodes through a full N x N adaptive adjacency."""

    tag = "dense_gcn"
    config_type = DenseGCNConfig

    def __init__(self, config, params=None):
        self.config = config
        self.params = init_params(config) if params is None else params
        shapes = param_shapes(config)
        if set(self.params) != set(shapes):
            raise ShapeError("parameter names do not match the registry")
        for k, s in shapes.items():
            if self.params[k].shape != s:
                raise ShapeError(f"{k}: expected {s}, got {self.params[k].shape}")

    def param_count(self):
        return sum(v.size for v in self.params.values())

    def adjacency(self):
        return adjacency(self.params["E1"], self.params["E2"]).value

    def forward(self, X, leaves=None):
        cfg = self.config
        X = nk.as_tensor(X)
        if X.shape[-2:] != (cfg.N, cfg.S):
            raise ShapeError(f"input must end in (N, S)=({cfg.N}, {cfg.S}), got {X.shape}")
        p = leaves if leaves is not None else {k: nk.Tensor(v) for k, v in self.params.items()}
        A = adjacency(p["E1"], p["E2"])
        P = nk.matmul(X, p["W_in"])
        skip = None
        for l in range(cfg.L):
            h = dense_gcn_layer(P, None, None, p[f"l{l}.W"], A=A)
            out = nk.concat(P, h, "cols")
            if not np.isfinite(out.value).all():
                raise DivergenceError(f"non-finite activations in layer {l}")
            s = nk.matmul(out, p["W_skip"])
            skip = s if skip is None else skip + s
            if l < cfg.L - 1:
                P = nk.matmul(out, p[f"l{l}.W_upd"])
        return nk.matmul(nk.relu(skip), p["W_out"])


def historical_average(inputs, T):
    """Per-node mean of the input window repeated over T steps (flow units)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[-1] < 1:
        raise ShapeError("historical_average needs at least one input step")
    m = inputs.mean(axis=-1, keepdims=True)
    return np.repeat(m, T, axis=-1)
