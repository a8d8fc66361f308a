"""Minibatch training with Adam, MAE loss, early stopping and metrics."""
from __future__ import annotations

import copy
import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numkernel as nk
from .checkpoint import save_checkpoint
from .errors import DivergenceError, ShapeError
from .rng import SplitMix64

LOG_FIELDS = ("epoch", "train_mae", "val_mae", "val_mape", "val_rmse", "seconds")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    clip_norm: float | None = None
    timing: bool = True  # False writes 0.0 seconds so logs are byte-reproducible

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class Metrics:
    mae: float
    mape: float  # percent; nan when every target is below the floor
    rmse: float

    def to_dict(self):
        return {"mae": self.mae, "mape": None if math.isnan(self.mape) else self.mape,
                "rmse": self.rmse}


def compute_metrics(pred, truth, mape_floor=1.0):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} and truth {truth.shape} differ")
    err = pred - truth
    keep = np.abs(truth) > mape_floor
    mape = 100.0 * float(np.mean(np.abs(err[keep]) / np.abs(truth[keep]))) if keep.any() else math.nan
    return Metrics(float(np.mean(np.abs(err))), mape, float(np.sqrt(np.mean(err ** 2))))


def mae_loss(pred_norm, target, stats):
    """MAE in flow units of a normalized prediction Tensor."""
    pred = pred_norm * stats.std + stats.mean
    return nk.mean(nk.absolute(pred - target))


def predict(model, inputs, batch_size=64):
    """Denormalization is left to the caller."""
    outs = [model.forward(inputs[i:i + batch_size]).value
            for i in range(0, len(inputs), batch_size)]
    return np.concatenate(outs) if outs else np.empty(inputs.shape[:-1] + (model.config.T,))


def evaluate(model, dataset, batch_size=64):
    pred = predict(model, dataset.inputs, batch_size) * dataset.stats.std + dataset.stats.mean
    return compute_metrics(pred, dataset.targets)


@dataclass
class LogRecord:
    epoch: int
    train_mae: float
    val_mae: float
    val_mape: float
    val_rmse: float
    seconds: float


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = math.inf
    best_params: dict | None = None


def write_log(log, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in log:
            w.writerow([r.epoch, repr(r.train_mae), repr(r.val_mae), repr(r.val_mape),
                        repr(r.val_rmse), repr(r.seconds)])


def train_step(model, X, Y, stats, optimizer, clip_norm=None, frozen=None):
    """One Adam step; ``frozen`` maps a parameter name to a boolean mask of
    entries that must keep their current value."""
    leaves = {k: nk.Tensor(v, requires_grad=True) for k, v in model.params.items()}
    loss = mae_loss(model.forward(X, leaves), Y, stats)
    loss.backward()
    grads = {k: t.grad for k, t in leaves.items() if t.grad is not None}
    for k, mask in (frozen or {}).items():
        if k in grads:
            grads[k] = np.where(mask, 0.0, grads[k])
    if clip_norm is not None:
        norm = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
        if norm > clip_norm:
            grads = {k: g * (clip_norm / norm) for k, g in grads.items()}
    optimizer.step(grads)
    return float(loss.value)


def train(model, train_ds, val_ds, cfg, log_path=None, checkpoint_path=None, frozen=None):
    """Fit ``model`` in place and leave it holding the best-on-validation
    parameters.  Without a validation set the training loss selects.

    Entries flagged in ``frozen`` (name -> boolean mask) receive zero gradient;
    with a fresh Adam state they never move.
    """
    if len(train_ds) == 0:
        raise ShapeError("training split has no windows")
    optimizer = nk.Adam(model.params, lr=cfg.lr)
    rng = SplitMix64(cfg.seed)
    result = TrainResult(best_params=copy.deepcopy(model.params))
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_ds))
        losses = []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                loss = train_step(model, train_ds.inputs[idx], train_ds.targets[idx],
                                  train_ds.stats, optimizer, cfg.clip_norm, frozen)
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}, batch {b}: {exc}") from None
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            losses.append(loss)
        train_mae = float(np.mean(losses))
        if len(val_ds):
            m = evaluate(model, val_ds)
        else:
            m = Metrics(train_mae, math.nan, math.nan)
        seconds = time.perf_counter() - t0 if cfg.timing else 0.0
        result.log.append(LogRecord(epoch, train_mae, m.mae, m.mape, m.rmse, seconds))
        if m.mae < result.best_val_mae:
            result.best_val_mae, result.best_epoch = m.mae, epoch
            result.best_params = copy.deepcopy(model.params)
            stale = 0
        else:
            stale += 1
        if log_path is not None:
            write_log(result.log, log_path)
        if stale >= cfg.patience:
            break
    for k, v in result.best_params.items():
        model.params[k][...] = v
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model.tag, model.config, model.params)
    return result
