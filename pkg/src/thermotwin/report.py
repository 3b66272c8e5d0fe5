"""Report rendering: evaluation figures and CSVs written next to metrics.json."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .microclimate import STRESS_BANDS, UtciStack
from .metrics import MetricResult

_BAND_COLORS = {
    "no": "#4575b4",
    "moderate": "#fee090",
    "strong": "#fc8d59",
    "very_strong": "#d73027",
    "extreme": "#7f0000",
}


def write_hourly_csv(path, times, hourly: list[MetricResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "mse", "rmse", "mae", "mape", "n_cells"])
        for t, m in zip(times, hourly):
            w.writerow([t, f"{m.mse:.6f}", f"{m.rmse:.6f}", f"{m.mae:.6f}",
                        "" if m.mape is None else f"{m.mape:.4f}", m.n_cells])


def plot_hourly_error(path, times, hourly: list[MetricResult]) -> None:
    hours = np.arange(len(hourly))
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(hours, [m.rmse for m in hourly], label="RMSE", marker="o", ms=3)
    ax.plot(hours, [m.mae for m in hourly], label="MAE", marker="s", ms=3)
    ax.set_xlabel("forecast hour")
    ax.set_ylabel("error (degC)")
    ax.set_title("Prediction error by hour")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_landcover_error(path, by_class: dict) -> None:
    labels = list(by_class)
    mae = [by_class[k].mae for k in labels]
    rmse = [by_class[k].rmse for k in labels]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.2, rmse, width=0.4, label="RMSE")
    ax.bar(x + 0.2, mae, width=0.4, label="MAE")
    ax.set_xticks(x, labels, rotation=20)
    ax.set_ylabel("error (degC)")
    ax.set_title("Prediction error by land cover")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_band_timeline(path, summary_rows) -> None:
    """Stacked per-hour stress-band proportions, one column per hour."""
    labels = [b[0] for b in STRESS_BANDS]
    hours = np.arange(len(summary_rows))
    props = np.array([[row.proportions[l] for l in labels]
                      for row in summary_rows])
    fig, ax = plt.subplots(figsize=(9, 4))
    bottom = np.zeros(len(summary_rows))
    for i, label in enumerate(labels):
        ax.bar(hours, props[:, i], bottom=bottom, width=1.0,
               color=_BAND_COLORS[label], label=label.replace("_", " "))
        bottom += props[:, i]
    ax.set_xlabel("hour")
    ax.set_ylabel("pixel proportion")
    ax.set_ylim(0, 1)
    ax.set_title("Hourly heat-stress category distribution")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_heatmap_frame(path, stack: UtciStack, index: int) -> None:
    frame = stack.frames[index]
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(frame, cmap="inferno")
    fig.colorbar(im, ax=ax, label="UTCI (degC)")
    ax.set_title(f"UTCI at {stack.times[index].isoformat()}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_daily_maxima(path, days, maxima, threshold, events) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(days, maxima, marker="o", ms=4, label="daily max ta")
    ax.axhline(threshold, color="crimson", ls="--",
               label=f"threshold {threshold:.2f} degC")
    for ev in events:
        ax.axvspan(ev.start_day, ev.end_day, color="crimson", alpha=0.15)
    ax.set_xlabel("day")
    ax.set_ylabel("degC")
    ax.set_title("Daily maxima and detected heat waves")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
