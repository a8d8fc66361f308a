"""Stacked Feature Extractor / Relational Compressor layers.

Shapes for one window (a leading batch axis is carried through unchanged)::

    X        (N, S)     z-scored input window
    P        (N, d)     input embedding, X @ W_in
    Q        (N, d)     node embedding (trainable, shared by all layers)
    P||Q     (N, 2d)
    V1, V3   (C, N)     compression matrices
    V2       (N, C)     decompression matrix
    V4       (N, C+C')
    U        (C', 2d)   coefficient rows appended below the compressed state
    K        (C+C', C+C')  adjacency in the compressed space

No operation touches an N x N array, so time and memory are linear in N.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numkernel as nk
from .errors import DivergenceError, ShapeError
from .rng import SplitMix64


@dataclass(frozen=True)
class GSNetConfig:
    N: int
    S: int = 12
    T: int = 12
    d: int = 32
    C: int | None = None
    C_prime: int | None = None
    L: int = 3
    hidden: int | None = None
    seed: int = 0

    def __post_init__(self):
        # d = C = C' unless set explicitly
        if self.C is None:
            object.__setattr__(self, "C", self.d)
        if self.C_prime is None:
            object.__setattr__(self, "C_prime", self.C)
        if self.hidden is None:
            object.__setattr__(self, "hidden", 4 * self.d)
        for name in ("N", "S", "T", "d", "C", "L", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.C_prime < 0:
            raise ValueError("C_prime must be non-negative")

    def to_dict(self):
        return asdict(self)


def param_shapes(cfg):
    """Ordered parameter registry: name -> shape."""
    N, S, T, d, C, Cp, h = cfg.N, cfg.S, cfg.T, cfg.d, cfg.C, cfg.C_prime, cfg.hidden
    shapes = {"W_in": (S, d), "Q": (N, d)}
    for l in range(cfg.L):
        shapes.update({
            f"l{l}.W1": (d, C), f"l{l}.B1": (N, C),
            f"l{l}.W2": (d, C), f"l{l}.B2": (N, C),
            f"l{l}.W3": (2 * d, C), f"l{l}.B3": (N, C),
            f"l{l}.W4": (2 * d, C + Cp), f"l{l}.B4": (N, C + Cp),
            f"l{l}.U": (Cp, 2 * d), f"l{l}.K": (C + Cp, C + Cp),
        })
        if l < cfg.L - 1:
            shapes[f"l{l}.W_upd"] = (4 * d, d)
    shapes["W_skip"] = (4 * d, h)
    shapes["W_out"] = (h, T)
    return shapes


def param_count(cfg):
    """Closed form for the registry size.

    Linear in N with slope ``d + L * (4C + C')``: Q plus the per-node bias
    rows B1..B4 of every layer.  Everything else is independent of N.
    """
    S, T, d, C, Cp, h, L = cfg.S, cfg.T, cfg.d, cfg.C, cfg.C_prime, cfg.hidden, cfg.L
    per_node = d + L * (4 * C + Cp)
    per_layer = 2 * d * C + 2 * d * C + 2 * d * (C + Cp) + Cp * 2 * d + (C + Cp) ** 2
    fixed = S * d + L * per_layer + (L - 1) * 4 * d * d + 4 * d * h + h * T
    return cfg.N * per_node + fixed


def init_params(cfg):
    rng = SplitMix64(cfg.seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.split(".")[-1]
        if leaf.startswith("B"):
            params[name] = np.zeros(shape)
        elif leaf in ("Q", "U", "K"):
            params[name] = rng.uniform(-0.1, 0.1, shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, shape)
    return params


def input_embed(X, W_in):
    return nk.matmul(X, W_in)


def feature_extractor(P, Q, W1, B1, W2, B2):
    """Compress N nodes to C slots with a node-feature matrix, then expand."""
    x_fe = nk.concat(P, Q, "cols")
    v1 = nk.transpose(nk.matmul(Q, W1) + B1)
    h_fe = nk.matmul(v1, x_fe)
    v2 = nk.matmul(Q, W2) + B2
    return nk.layer_norm(x_fe + nk.matmul(v2, nk.softmax_cols(h_fe)))


def relational_compressor(P, Q, W3, B3, W4, B4, U, K):
    """Input-dependent compression, mixing by K in C+C' space, expansion."""
    z = nk.concat(P, Q, "cols")
    v3 = nk.transpose(nk.matmul(z, W3) + B3)
    h_rc = nk.matmul(v3, z)
    h_mixed = nk.matmul(K, nk.concat(h_rc, U, "rows"))
    v4 = nk.matmul(z, W4) + B4
    return nk.layer_norm(z + nk.matmul(v4, nk.softmax_cols(h_mixed)))


def _check(t, where):
    if not np.isfinite(t.value).all():
        raise DivergenceError(f"non-finite activations in {where}")


class GSNet:
    tag = "gsnet"
    config_type = GSNetConfig

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

    def forward(self, X, leaves=None):
        """Normalized predictions (..., N, T) for normalized inputs (..., N, S)."""
        cfg = self.config
        X = nk.as_tensor(X)
        if X.shape[-2:] != (cfg.N, cfg.S):
            raise ShapeError(f"input must end in (N, S)=({cfg.N}, {cfg.S}), got {X.shape}")
        p = leaves if leaves is not None else {k: nk.Tensor(v) for k, v in self.params.items()}
        P = input_embed(X, p["W_in"])
        Q = p["Q"]
        skip = None
        for l in range(cfg.L):
            g = lambda n: p[f"l{l}.{n}"]
            o_fe = feature_extractor(P, Q, g("W1"), g("B1"), g("W2"), g("B2"))
            o_rc = relational_compressor(P, Q, g("W3"), g("B3"), g("W4"), g("B4"), g("U"), g("K"))
            out = nk.concat(o_fe, o_rc, "cols")
            _check(out, f"layer {l}")
            s = nk.matmul(out, p["W_skip"])
            skip = s if skip is None else skip + s
            if l < cfg.L - 1:
                P = nk.matmul(out, g("W_upd"))
        pred = nk.matmul(nk.relu(skip), p["W_out"])
        _check(pred, "output head")
        return pred
