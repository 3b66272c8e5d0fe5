"""Evaluation metrics over masked raster pairs: MSE, RMSE, MAE, MAPE.

MAPE divides by the true value, so cells with |truth| below ``mape_floor``
(default 1 degC) are excluded from it and its denominator counts only the
cells actually summed; with no eligible cells MAPE is reported as None
rather than a fake zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricResult:
    mse: float
    rmse: float
    mae: float
    mape: float | None   # percent; None when no cell clears the floor
    n_cells: int

    def to_dict(self) -> dict:
        return {"mse": self.mse, "rmse": self.rmse, "mae": self.mae,
                "mape": self.mape, "n_cells": self.n_cells}


def compute_metrics(truth, prediction, mask=None,
                    mape_floor: float = 1.0) -> MetricResult:
    """Metrics over unmasked, finite cells of congruent arrays.

    ``mask`` broadcasts against the arrays (e.g. a (H, W) mask applied to a
    (T, H, W) stack); NaN cells in either array are excluded as well.
    """
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(prediction, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    valid = np.isfinite(t) & np.isfinite(p)
    if mask is not None:
        valid &= np.broadcast_to(np.asarray(mask, bool), t.shape)
    m = int(valid.sum())
    if m == 0:
        raise ValueError("no evaluable cells")
    diff = t[valid] - p[valid]
    mse = float(np.mean(diff * diff))
    mae = float(np.mean(np.abs(diff)))
    tv = t[valid]
    eligible = np.abs(tv) >= mape_floor
    if eligible.any():
        mape = float(100.0 * np.mean(np.abs(diff[eligible] / tv[eligible])))
    else:
        mape = None
    return MetricResult(mse, float(np.sqrt(mse)), mae, mape, m)


def per_hour_metrics(truth_stack, pred_stack, mask) -> list[MetricResult]:
    """One MetricResult per hour of congruent (T, H, W) stacks."""
    return [compute_metrics(truth_stack[i], pred_stack[i], mask)
            for i in range(truth_stack.shape[0])]


def per_landcover_metrics(truth_stack, pred_stack, mask, landcover,
                          labels) -> dict:
    """Metrics per land-cover class; classes with no evaluable cells are
    skipped."""
    out = {}
    for code, label in enumerate(labels):
        sel = mask & (landcover == code)
        if not sel.any():
            continue
        try:
            out[label] = compute_metrics(truth_stack, pred_stack, sel)
        except ValueError:
            continue
    return out
