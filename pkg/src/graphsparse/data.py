"""Traffic series ingestion, gap filling, normalization and windowing.

Series file format (one header line, then one row per node)::

    nodes=<N> steps=<L> rate_min=<R>
    v00,v01,...,v0L
    ...

An empty cell marks a missing reading.  A companion ``<stem>.adj`` file may
hold an N x N reference adjacency, one comma-separated row per line.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError
from .rng import SplitMix64

_HEADER = re.compile(r"^nodes=(\d+) steps=(\d+) rate_min=(\d+)$")


@dataclass(frozen=True)
class TrafficSeries:
    values: np.ndarray  # (N, L) flow units
    mask: np.ndarray  # (N, L) bool, True = observed
    sample_rate_minutes: int = 5
    adjacency: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise DataError(f"values {self.values.shape} and mask {self.mask.shape} must be equal 2-D shapes")
        if not np.isfinite(self.values[self.mask]).all():
            raise DataError("observed values must be finite")

    @property
    def node_count(self):
        return self.values.shape[0]

    @property
    def step_count(self):
        return self.values.shape[1]

    @classmethod
    def from_values(cls, values, sample_rate_minutes=5, adjacency=None):
        values = np.asarray(values, dtype=np.float64)
        mask = np.isfinite(values)
        return cls(np.where(mask, values, 0.0), mask, sample_rate_minutes, adjacency)


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise DataError(
                f"std must be > 0 (got {self.std}); the training series is constant, "
                "add jitter or reject the series")

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=np.float64)
        return cls(float(values.mean()), float(values.std()))


@dataclass
class WindowedDataset:
    """Stride-1 windows from one split.

    ``inputs`` are z-scored, ``targets`` stay in flow units.
    """

    inputs: np.ndarray  # (M, N, S)
    targets: np.ndarray  # (M, N, T)
    stats: NormStats
    split: str
    offset: int = 0  # first series column of this split

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def raw_inputs(self):
        return denormalize(self.inputs, self.stats)


def interpolate_missing(series):
    """Linear interpolation in time per node; edges take the nearest reading."""
    t = np.arange(series.step_count)
    out = series.values.copy()
    for i in range(series.node_count):
        seen = series.mask[i]
        if not seen.any():
            raise DataError(f"node {i} has no observed values")
        if not seen.all():
            out[i] = np.interp(t, t[seen], series.values[i, seen])
    return replace(series, values=out, mask=np.ones_like(series.mask))


def zscore(x, stats):
    if isinstance(x, TrafficSeries):
        return replace(x, values=(x.values - stats.mean) / stats.std)
    return (np.asarray(x) - stats.mean) / stats.std


def denormalize(x, stats):
    if isinstance(x, TrafficSeries):
        return replace(x, values=x.values * stats.std + stats.mean)
    return np.asarray(x) * stats.std + stats.mean


def split_lengths(L, ratios):
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_train = int(np.floor(L * ratios[0] + 1e-9))
    n_val = int(np.floor(L * ratios[1] + 1e-9))
    return n_train, n_val, L - n_train - n_val


def window_count(length, S, T):
    return max(0, length - S - T + 1)


def make_windows(x, S, T):
    """All stride-1 (input, target) pairs of a (N, ℓ) block."""
    M = window_count(x.shape[1], S, T)
    idx = np.arange(M)[:, None]
    inputs = x[:, idx + np.arange(S)].transpose(1, 0, 2)
    targets = x[:, idx + S + np.arange(T)].transpose(1, 0, 2)
    return inputs, targets


def window_and_split(series, S=12, T=12, ratios=(0.7, 0.1, 0.2)):
    """Chronological split, then windows inside each split.

    Statistics come from the training split only.  A split with a zero ratio
    yields an empty dataset; a non-empty split too short for one window is an
    error.
    """
    if not series.mask.all():
        raise DataError("series has missing values; call interpolate_missing first")
    lengths = split_lengths(series.step_count, ratios)
    need = S + T
    for name, n, r in zip(("train", "val", "test"), lengths, ratios):
        if r > 0 and n < need:
            raise DataError(f"{name} split has {n} steps; at least S+T={need} required "
                            f"(series needs >= {int(np.ceil(need / r))} steps)")
    stats = NormStats.fit(series.values[:, : lengths[0]])
    out = []
    start = 0
    N = series.node_count
    for name, n in zip(("train", "val", "test"), lengths):
        block = series.values[:, start:start + n]
        if n >= need:
            inputs, targets = make_windows(block, S, T)
        else:
            inputs, targets = np.empty((0, N, S)), np.empty((0, N, T))
        out.append(WindowedDataset(zscore(inputs, stats), targets, stats, name, start))
        start += n
    return tuple(out)


def synth_traffic(N, L, seed=0, graph_density=0.05, rate_min=5, coupling=0.95,
                  lag=12, persistence=0.0, latent_std=20.0, noise_std=3.0):
    """Daily-periodic flows coupled through a planted sparse graph.

    Each node carries ``level + amp * sin(daily phase)`` plus a deviation
    ``dev`` and observation noise, where ``dev_i(t) = z_i(t) + coupling *
    sum_j A_ij dev_j(t - lag)`` and ``z`` is a private AR(1) latent.  ``A`` is
    a random sparse row-stochastic matrix over a random geometric graph: nodes get uniform
    positions in the unit square and the closest ``graph_density`` share of
    node pairs become (undirected) edges.  Rows without edges stay zero.

    Uses :class:`~graphsparse.rng.SplitMix64`, so the output is identical for
    a given seed on every platform.
    """
    if lag < 1:
        raise DataError("lag must be >= 1")
    if N < 2 or L < 48:
        raise DataError(f"synth_traffic needs N >= 2 and L >= 48, got N={N}, L={L}")
    rng = SplitMix64(seed)
    pos = rng.random((N, 2))
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
    off = ~np.eye(N, dtype=bool)
    n_pairs = int(round(graph_density * N * (N - 1) / 2))
    edges = np.zeros((N, N), dtype=bool)
    if n_pairs > 0:
        iu = np.triu_indices(N, 1)
        closest = np.argsort(dist[iu], kind="stable")[:n_pairs]
        edges[iu[0][closest], iu[1][closest]] = True
        edges |= edges.T
    weights = rng.uniform(0.5, 1.5, (N, N)) * edges * off
    rows = weights.sum(axis=1, keepdims=True)
    adj = np.divide(weights, rows, out=np.zeros_like(weights), where=rows > 0)

    period = 24 * 60 // rate_min
    t = np.arange(L)
    level = rng.uniform(100.0, 300.0, (N, 1))
    amp = rng.uniform(0.3, 0.6, (N, 1)) * level
    phase = rng.uniform(0.0, 2 * np.pi, (N, 1))
    base = level + amp * np.sin(2 * np.pi * t / period + phase)

    burn = 8 * lag
    total = L + burn
    shocks = rng.normal(0.0, latent_std * np.sqrt(1 - persistence ** 2), (N, total))
    z = np.empty_like(shocks)
    z[:, 0] = rng.normal(0.0, latent_std, N)
    for k in range(1, total):
        z[:, k] = persistence * z[:, k - 1] + shocks[:, k]
    dev = z.copy()
    # deviations propagate along edges lag steps later, one lag-block at a time
    for k in range(lag, total, lag):
        dev[:, k:k + lag] += coupling * (adj @ dev[:, k - lag:k])[:, :total - k]
    values = base + dev[:, burn:] + rng.normal(0.0, noise_std, (N, L))
    return TrafficSeries(values, np.ones((N, L), dtype=bool), rate_min, adj)


def _fmt(v):
    return repr(float(v))


def write_series(series, path):
    path = Path(path)
    lines = [f"nodes={series.node_count} steps={series.step_count} rate_min={series.sample_rate_minutes}"]
    for vals, seen in zip(series.values, series.mask):
        lines.append(",".join(_fmt(v) if m else "" for v, m in zip(vals, seen)))
    path.write_text("\n".join(lines) + "\n")
    if series.adjacency is not None:
        write_adjacency(series.adjacency, path.with_suffix(".adj"))


def write_adjacency(adj, path):
    Path(path).write_text("".join(",".join(_fmt(v) for v in row) + "\n" for row in adj))


def _cell(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"non-numeric cell {tok!r}", lineno) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite cell {tok!r}", lineno)
    return v


def read_adjacency(path, N=None):
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            rows.append([_cell(tok, lineno) for tok in line.split(",")])
    if not rows or any(len(r) != len(rows[0]) for r in rows) or len(rows) != len(rows[0]):
        raise ParseError(f"adjacency in {path} is not square")
    adj = np.array(rows)
    if N is not None and adj.shape[0] != N:
        raise ParseError(f"adjacency has {adj.shape[0]} rows, series has {N} nodes")
    return adj


def read_series(path):
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    m = _HEADER.match(lines[0].strip())
    if m is None:
        raise ParseError("malformed header, expected 'nodes=<N> steps=<L> rate_min=<R>'", 1)
    N, L, rate = (int(g) for g in m.groups())
    if N < 1 or L < 1 or rate < 1:
        raise ParseError("header counts must be positive", 1)
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != N:
        raise ParseError(f"expected {N} node rows, found {len(body)}", len(body) + 2)
    values = np.zeros((N, L))
    mask = np.zeros((N, L), dtype=bool)
    for i, line in enumerate(body):
        lineno = i + 2
        cells = line.split(",")
        if len(cells) != L:
            raise ParseError(f"expected {L} cells, found {len(cells)}", lineno)
        for j, tok in enumerate(cells):
            tok = tok.strip()
            if tok:
                values[i, j] = _cell(tok, lineno)
                mask[i, j] = True
    adj_path = path.with_suffix(".adj")
    adj = read_adjacency(adj_path, N) if adj_path.exists() else None
    return TrafficSeries(values, mask, rate, adj)
