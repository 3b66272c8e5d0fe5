"""Full-frame inference: overlap tiling, merging, denormalization, plus the
persistence baseline."""

from __future__ import annotations

import time
from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from ..dataset import (NormStats, TILE, denormalize_utci, merge_tiles,
                       normalize_utci, plan_tiles, spatial_channels)
from ..meteo import MeteoSeries
from ..microclimate import UtciStack
from ..scene import GridScene
from .config import StVitConfig
from .model import forward


@dataclass
class PredictionResult:
    stack: UtciStack
    seconds: float
    n_tiles: int


def persistence_baseline(stack: UtciStack, history_end: int,
                         t_out: int = 24) -> np.ndarray:
    """Repeat the most recent 24 observed hours: pred[t] = obs[t - 24]."""
    if history_end < 24:
        raise ValueError(f"need at least 24 observed hours, got {history_end}")
    frames = stack.frames[history_end - 24:history_end]
    reps = int(np.ceil(t_out / 24))
    return np.tile(frames, (reps, 1, 1))[:t_out]


def predict_region(params, config: StVitConfig, stats: NormStats,
                   scene: GridScene, stack: UtciStack, series: MeteoSeries,
                   history_end: int, bbox=None) -> PredictionResult:
    """Forecast t_out hours after stack hour ``history_end`` over ``bbox``.

    bbox is (row0, col0, row1, col1), end-exclusive, defaulting to the full
    frame; it must admit at least one 64x64 tile. Tiles are predicted
    independently and averaged over their overlaps; building cells come back
    as NaN. Wall-clock time is reported so callers can compare against the
    simulator.
    """
    t_in, t_out = config.t_in, config.t_out
    if history_end < t_in:
        raise ValueError(f"need {t_in} hours of history, got {history_end}")
    if history_end > len(stack):
        raise ValueError("history_end beyond stack length")
    nrows, ncols = stack.frames.shape[1:]
    if bbox is None:
        bbox = (0, 0, nrows, ncols)
    r0, c0, r1, c1 = bbox
    if not (0 <= r0 < r1 <= nrows and 0 <= c0 < c1 <= ncols):
        raise ValueError(f"bbox {bbox} out of range for {nrows}x{ncols}")
    if r1 - r0 < TILE or c1 - c0 < TILE:
        raise ValueError(f"bbox {bbox} smaller than one {TILE}x{TILE} tile")

    t_start = time.perf_counter()
    dtype = config.np_dtype
    layout = plan_tiles(r1 - r0, c1 - c0)

    sp_all = spatial_channels(scene)
    sp_all = ((sp_all - stats.spatial_mean[:, None, None])
              / stats.spatial_std[:, None, None])
    met = series.values()[history_end - t_in:history_end]
    met = ((met - stats.meteo_mean) / stats.meteo_std).astype(dtype)
    frames_in = stack.frames[history_end - t_in:history_end]

    tiles = []
    origins = list(layout.origins)
    bs = max(1, config.batch_size)
    for i in range(0, len(origins), bs):
        group = origins[i:i + bs]
        spatial = np.stack([
            sp_all[:, r0 + tr:r0 + tr + TILE, c0 + tc:c0 + tc + TILE]
            for tr, tc in group]).astype(dtype)
        utci_in = np.stack([
            normalize_utci(frames_in[:, r0 + tr:r0 + tr + TILE,
                                     c0 + tc:c0 + tc + TILE],
                           stack.mask[r0 + tr:r0 + tr + TILE,
                                      c0 + tc:c0 + tc + TILE], stats)
            for tr, tc in group]).astype(dtype)
        meteo = np.broadcast_to(met, (len(group),) + met.shape).copy()
        pred = forward(params, config, spatial, utci_in, meteo)
        tiles.extend(np.asarray(pred[j], np.float64) for j in range(len(group)))

    merged = merge_tiles(layout, tiles)
    merged = denormalize_utci(merged, stats)
    mask = stack.mask[r0:r1, c0:c1]
    frames = np.where(mask[None], merged, np.nan).astype(np.float32)
    last = stack.times[history_end - 1]
    times = tuple(last + timedelta(hours=h + 1) for h in range(t_out))
    out = UtciStack(times, frames, mask.copy())
    return PredictionResult(out, time.perf_counter() - t_start, len(origins))
