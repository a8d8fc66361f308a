"""Scaling sweep: cost of one training step as the node count grows.

For each model and N the sweep records the median wall time of a fixed
number of training steps, the matmul multiply-accumulate count of one step,
parameter bytes, and the bytes of every array placed on the tape during that
step (all of them stay alive until the step ends).
"""
from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import numkernel as nk
from .baseline import DenseGCN, DenseGCNConfig
from .data import synth_traffic, window_and_split
from .errors import InsufficientDataError
from .model import GSNet, GSNetConfig
from .trainer import train_step

MODELS = {"gsnet": (GSNet, GSNetConfig), "dense_gcn": (DenseGCN, DenseGCNConfig)}
CSV_FIELDS = ("model", "N", "epoch_seconds", "step_flops", "param_bytes", "activation_bytes")


@dataclass
class ScalingRecord:
    model: str
    N: int
    epoch_seconds: float
    step_flops: int
    param_bytes: int
    activation_bytes: int
    square_activation: bool = False
    truncated: bool = False


def build_model(tag, N, d=8, L=3, S=12, T=12, seed=0):
    cls, cfg_cls = MODELS[tag]
    return cls(cfg_cls(N=N, S=S, T=T, d=d, L=L, seed=seed))


def measure(tag, N, d=8, L=3, S=12, T=12, batch_size=4, steps=3, repetitions=3, seed=0,
            timing=True):
    series = synth_traffic(N, max(48, S + T + batch_size), seed=seed)
    train_ds, _, _ = window_and_split(series, S, T, (1.0, 0.0, 0.0))
    X, Y = train_ds.inputs[:batch_size], train_ds.targets[:batch_size]
    model = build_model(tag, N, d, L, S, T, seed)
    opt = nk.Adam(model.params, lr=1e-4)
    with nk.FlopCounter() as flops, nk.AllocationProbe() as probe:
        train_step(model, X, Y, train_ds.stats, opt)
    times = []
    if timing:
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for _ in range(steps):
                train_step(model, X, Y, train_ds.stats, opt)
            times.append(time.perf_counter() - t0)
    return ScalingRecord(tag, N, statistics.median(times) if times else 0.0, flops.macs,
                         8 * model.param_count(), probe.total_bytes, probe.has_square(N))


def _measure_or_truncate(args):
    tag, N = args[0], args[1]
    try:
        return measure(*args)
    except MemoryError:
        return ScalingRecord(tag, N, 0.0, 0, 0, 0, truncated=True)


def sweep(models, Ns, d=8, L=3, S=12, T=12, batch_size=4, steps=3, repetitions=3, seed=0,
          timing=True, jobs=1):
    """One record per (model, N); a MemoryError marks that record truncated.

    ``jobs > 1`` spreads the points over worker processes, allowed only with
    ``timing=False`` since concurrent runs distort wall-clock numbers.
    """
    Ns = list(Ns)
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("Ns must be strictly increasing")
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    if jobs > 1 and timing:
        raise ValueError("parallel sweeps are only allowed with timing=False")
    tasks = [(tag, N, d, L, S, T, batch_size, steps, repetitions, seed, timing)
             for tag in models for N in Ns]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_measure_or_truncate, tasks))
    return [_measure_or_truncate(t) for t in tasks]


def fit_scaling_exponent(records, field="step_flops"):
    """Least-squares slope of log(field) against log(N)."""
    pts = [(r.N, getattr(r, field)) for r in records if not r.truncated]
    if len(pts) < 3:
        raise InsufficientDataError(f"need >= 3 records to fit an exponent, got {len(pts)}")
    n, y = np.array(pts, dtype=np.float64).T
    if (y <= 0).any():
        raise ValueError(f"{field} must be positive to fit a log-log slope")
    return float(np.polyfit(np.log(n), np.log(y), 1)[0])


def summarize(records):
    out = {}
    for tag in dict.fromkeys(r.model for r in records):
        recs = [r for r in records if r.model == tag]
        entry = {"Ns": [r.N for r in recs]}
        for field in ("step_flops", "epoch_seconds", "activation_bytes", "param_bytes"):
            try:
                entry[f"{field}_exponent"] = fit_scaling_exponent(recs, field)
            except (InsufficientDataError, ValueError, FloatingPointError):
                entry[f"{field}_exponent"] = None
        entry["square_activation"] = any(r.square_activation for r in recs)
        out[tag] = entry
    return out


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.model, r.N, repr(r.epoch_seconds), r.step_flops, r.param_bytes,
                        r.activation_bytes])


def write_summary(records, path):
    payload = {"exponents": summarize(records), "records": [asdict(r) for r in records]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
