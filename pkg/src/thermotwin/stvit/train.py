"""Adam training loop with early stopping on validation loss."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import StVitConfig
from .model import (ModelBatch, NonFiniteLossError, batch_loss, loss_and_grad,
                    slice_keys_from_origins)
from .params import init_params

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    def __init__(self, report):
        self.report = report
        super().__init__("training diverged (non-finite loss)")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    stopped_reason: str = ""
    wall_seconds: float = 0.0

    def summary(self) -> str:
        return (f"{len(self.epochs)} epochs, best val {self.best_val_loss:.6f} "
                f"at epoch {self.best_epoch} ({self.stopped_reason}, "
                f"{self.wall_seconds:.1f}s)")


class Adam:
    """Deterministic Adam over a parameter dict (sorted update order)."""

    def __init__(self, params, lr):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - ADAM_BETA1 ** self.t
        b2c = 1.0 - ADAM_BETA2 ** self.t
        for name in sorted(params):
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            update = (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)
            params[name] -= np.asarray(self.lr * update, dtype=params[name].dtype)


def _stack_batch(samples, dtype) -> ModelBatch:
    t_in = samples[0].utci_in.shape[0]
    return ModelBatch(
        spatial=np.stack([s.spatial for s in samples]).astype(dtype),
        utci_in=np.stack([s.utci_in for s in samples]).astype(dtype),
        meteo=np.stack([s.meteo_in for s in samples]).astype(dtype),
        target=np.stack([s.target for s in samples]).astype(dtype),
        mask=np.stack([s.mask for s in samples]),
        slice_keys=slice_keys_from_origins([s.origin for s in samples], t_in),
    )


def evaluate_loss(params, config, batches) -> float:
    """Cell-hour-weighted mean MSE over batches."""
    total, weight = 0.0, 0
    for batch in batches:
        m = int(batch.mask.sum()) * config.t_out
        total += batch_loss(params, config, batch) * m
        weight += m
    return total / weight


def train(config: StVitConfig, train_windows, val_windows,
          params=None, max_seconds: float | None = None,
          log=None):
    """Train on WindowSample lists; returns (best_params, TrainReport).

    Stops when validation loss has not improved by ``min_delta`` for
    ``patience`` consecutive epochs, at ``max_epochs``, or when the optional
    wall-clock budget runs out (checked at epoch boundaries). The returned
    parameters are those of the best validation epoch.
    """
    if not train_windows or not val_windows:
        raise ValueError("train and validation splits must both be non-empty")
    dtype = config.np_dtype
    if params is None:
        params = init_params(config)
    params = {k: np.asarray(v, dtype=dtype).copy() for k, v in params.items()}

    rng = np.random.default_rng(config.seed)
    opt = Adam(params, config.lr)
    report = TrainReport()
    n = len(train_windows)
    bs = config.batch_size
    val_batches = [_stack_batch(val_windows[i:i + bs], dtype)
                   for i in range(0, len(val_windows), bs)]

    best_params = {k: v.copy() for k, v in params.items()}
    bad_epochs = 0
    t_start = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        t_ep = time.perf_counter()
        order = rng.permutation(n)
        total, weight = 0.0, 0
        try:
            for i in range(0, n, bs):
                batch = _stack_batch([train_windows[j] for j in order[i:i + bs]],
                                     dtype)
                loss, grads = loss_and_grad(params, config, batch)
                opt.step(params, grads)
                m = int(batch.mask.sum()) * config.t_out
                total += loss * m
                weight += m
            val_loss = evaluate_loss(params, config, val_batches)
        except NonFiniteLossError:
            report.stopped_reason = "diverged"
            report.wall_seconds = time.perf_counter() - t_start
            raise TrainingDiverged(report)
        stats = EpochStats(epoch, total / weight, val_loss,
                           time.perf_counter() - t_ep)
        report.epochs.append(stats)
        if log is not None:
            log(f"epoch {epoch:3d}  train {stats.train_loss:.5f}  "
                f"val {stats.val_loss:.5f}  ({stats.seconds:.1f}s)")
        if val_loss < report.best_val_loss - config.min_delta:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                report.stopped_reason = "early_stopping"
                break
        if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
            report.stopped_reason = "time_budget"
            break
    if not report.stopped_reason:
        report.stopped_reason = "max_epochs"
    if report.best_epoch < 0:  # no epoch improved over +inf: keep last
        report.best_val_loss = report.epochs[-1].val_loss
        report.best_epoch = report.epochs[-1].epoch
        best_params = params
    report.wall_seconds = time.perf_counter() - t_start
    return best_params, report
