"""Windowing, normalization, cropping and overlap-tiling for the forecaster.

A window pairs t_in hours of (spatial channels, UTCI history, meteo) with the
following t_out hours of UTCI as the target. Normalization statistics are
z-scores fitted on the training split only; constant channels are flagged and
mapped to zero. Full-frame inference tiles the scene into 64x64 crops with a
10-pixel overlap and averages the overlapping predictions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .meteo import MeteoSeries
from .microclimate import UtciStack
from .scene import GridScene

TILE = 64
OVERLAP = 10

#: spatial channel order fed to the model
SPATIAL_CHANNELS = ("building_height", "canopy_height", "dem", "landcover_unit")


@dataclass(frozen=True)
class NormStats:
    """Per-channel z-score parameters fitted on the training split."""
    spatial_mean: np.ndarray   # (4,)
    spatial_std: np.ndarray    # (4,)
    meteo_mean: np.ndarray     # (7,)
    meteo_std: np.ndarray      # (7,)
    utci_mean: float
    utci_std: float
    constant_channels: tuple = ()   # names of channels with zero variance

    def to_dict(self) -> dict:
        return {
            "spatial_mean": self.spatial_mean.tolist(),
            "spatial_std": self.spatial_std.tolist(),
            "meteo_mean": self.meteo_mean.tolist(),
            "meteo_std": self.meteo_std.tolist(),
            "utci_mean": self.utci_mean,
            "utci_std": self.utci_std,
            "constant_channels": list(self.constant_channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["spatial_mean"]), np.asarray(d["spatial_std"]),
                   np.asarray(d["meteo_mean"]), np.asarray(d["meteo_std"]),
                   float(d["utci_mean"]), float(d["utci_std"]),
                   tuple(d.get("constant_channels", ())))


@dataclass(frozen=True)
class WindowSample:
    """One normalized training/evaluation window (h x w crop)."""
    spatial: np.ndarray    # (4, h, w)
    utci_in: np.ndarray    # (t_in, h, w), masked cells zeroed
    meteo_in: np.ndarray   # (t_in, 7)
    target: np.ndarray     # (t_out, h, w), masked cells zeroed
    mask: np.ndarray       # (h, w) bool
    origin: tuple          # (row, col, t0)


def spatial_channels(scene: GridScene) -> np.ndarray:
    """(4, rows, cols) raw spatial channels; land cover scaled to [0, 1]."""
    return np.stack([
        scene.building_height.astype(np.float64),
        scene.canopy_height.astype(np.float64),
        scene.dem.astype(np.float64),
        scene.landcover.astype(np.float64) / 5.0,
    ])


def make_windows(stack: UtciStack, series: MeteoSeries, t_in: int = 24,
                 t_out: int = 24, stride: int = 4) -> list[int]:
    """Window start hours: {0, stride, 2*stride, ...} with room for
    t_in + t_out frames. Stride 4 is the best-scoring setting of the
    window-step sweep and the default."""
    n = len(stack)
    if len(series) != n:
        raise ValueError(f"stack has {n} frames but series has {len(series)} hours")
    horizon = t_in + t_out
    if n < horizon:
        raise ValueError(f"need at least {horizon} hours, got {n}")
    return list(range(0, n - horizon + 1, stride))


def chronological_split(windows: list, train_fraction: float = 0.7):
    """First ceil(train_fraction * n) windows train, the rest evaluate."""
    if not windows:
        raise ValueError("no windows to split")
    n_train = math.ceil(train_fraction * len(windows))
    return windows[:n_train], windows[n_train:]


def fit_normalizer(stack: UtciStack, series: MeteoSeries, scene: GridScene,
                   train_starts: list[int], t_in: int = 24,
                   t_out: int = 24) -> NormStats:
    """Z-score stats from the hours covered by the training windows only.

    Spatial channels are static, so their stats come from the full scene;
    UTCI and meteo stats use only training-window hours. Constant channels
    get std 1 and are recorded so normalize() maps them to zero.
    """
    if not train_starts:
        raise ValueError("empty training split")
    last_hour = max(train_starts) + t_in + t_out
    sp = spatial_channels(scene).reshape(4, -1)
    sp_mean = sp.mean(axis=1)
    sp_std = sp.std(axis=1)
    met = series.values()[:last_hour]
    met_mean = met.mean(axis=0)
    met_std = met.std(axis=0)
    vals = stack.frames[:last_hour][:, stack.mask]
    vals = vals[np.isfinite(vals)]
    u_mean = float(vals.mean())
    u_std = float(vals.std())

    constant = []
    for i, name in enumerate(SPATIAL_CHANNELS):
        if sp_std[i] < 1e-12:
            sp_std[i] = 1.0
            constant.append(f"spatial:{name}")
    from .meteo import VARIABLES
    for i, name in enumerate(VARIABLES):
        if met_std[i] < 1e-12:
            met_std[i] = 1.0
            constant.append(f"meteo:{name}")
    if u_std < 1e-12:
        u_std = 1.0
        constant.append("utci")
    return NormStats(sp_mean, sp_std, met_mean, met_std, u_mean, u_std,
                     tuple(constant))


def normalize_utci(frames: np.ndarray, mask: np.ndarray,
                   stats: NormStats) -> np.ndarray:
    """(T,h,w) -> z-scores with masked/non-finite cells set exactly to 0."""
    z = (frames - stats.utci_mean) / stats.utci_std
    z = np.where(mask[None, :, :] & np.isfinite(z), z, 0.0)
    return z


def denormalize_utci(z: np.ndarray, stats: NormStats) -> np.ndarray:
    return z * stats.utci_std + stats.utci_mean


def build_window(stack: UtciStack, series: MeteoSeries, scene: GridScene,
                 stats: NormStats, start: int, t_in: int = 24,
                 t_out: int = 24, crop=None) -> WindowSample:
    """Assemble one normalized window; ``crop`` is (row0, col0, size)."""
    sp = spatial_channels(scene)
    sp = (sp - stats.spatial_mean[:, None, None]) / stats.spatial_std[:, None, None]
    met = series.values()[start:start + t_in]
    met = (met - stats.meteo_mean) / stats.meteo_std
    frames_in = stack.frames[start:start + t_in]
    frames_out = stack.frames[start + t_in:start + t_in + t_out]
    mask = stack.mask
    if crop is not None:
        r0, c0, size = crop
        sel = (slice(r0, r0 + size), slice(c0, c0 + size))
        sp = sp[:, sel[0], sel[1]]
        frames_in = frames_in[:, sel[0], sel[1]]
        frames_out = frames_out[:, sel[0], sel[1]]
        mask = mask[sel]
        origin = (r0, c0, start)
    else:
        origin = (0, 0, start)
    return WindowSample(
        spatial=sp,
        utci_in=normalize_utci(frames_in, mask, stats),
        meteo_in=met,
        target=normalize_utci(frames_out, mask, stats),
        mask=mask.copy(),
        origin=origin,
    )


def random_crop_origin(nrows: int, ncols: int, size: int, rng) -> tuple:
    """Uniform top-left corner for a size x size crop."""
    if nrows < size or ncols < size:
        raise ValueError(f"frame {nrows}x{ncols} smaller than crop {size}")
    return int(rng.integers(0, nrows - size + 1)), int(rng.integers(0, ncols - size + 1))


def build_training_windows(stack, series, scene, stats, starts,
                           t_in: int = 24, t_out: int = 24, crop_size: int = TILE,
                           seed: int = 0) -> list[WindowSample]:
    """One random crop per window start (the identity when the scene is
    already crop-sized); deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    out = []
    for start in starts:
        r0, c0 = random_crop_origin(scene.nrows, scene.ncols, crop_size, rng)
        out.append(build_window(stack, series, scene, stats, start,
                                t_in, t_out, crop=(r0, c0, crop_size)))
    return out


@dataclass(frozen=True)
class TileLayout:
    nrows: int
    ncols: int
    tile: int
    origins: tuple   # ((row, col), ...)


def plan_tiles(nrows: int, ncols: int, tile: int = TILE,
               overlap: int = OVERLAP) -> TileLayout:
    """Tile origins covering the frame with the requested overlap; the final
    tile in each axis is clamped to the boundary."""
    if nrows < tile or ncols < tile:
        raise ValueError(f"frame {nrows}x{ncols} smaller than tile {tile}")
    stride = tile - overlap

    def axis_origins(n):
        out = [0]
        while out[-1] + tile < n:
            out.append(min(out[-1] + stride, n - tile))
        return out

    origins = tuple((r, c) for r in axis_origins(nrows) for c in axis_origins(ncols))
    return TileLayout(nrows, ncols, tile, origins)


def merge_tiles(layout: TileLayout, tiles) -> np.ndarray:
    """Average per-cell over all covering tiles.

    ``tiles`` is a sequence aligned with layout.origins; each entry is
    (..., tile, tile). Accumulation runs in float64, so stacking crops of one
    frame reconstructs it bit-exactly.
    """
    tiles = list(tiles)
    if len(tiles) != len(layout.origins):
        raise ValueError(f"expected {len(layout.origins)} tiles, got {len(tiles)}")
    lead = tiles[0].shape[:-2]
    acc = np.zeros(lead + (layout.nrows, layout.ncols), np.float64)
    count = np.zeros((layout.nrows, layout.ncols), np.float64)
    t = layout.tile
    for (r, c), tile in zip(layout.origins, tiles):
        if tile.shape[-2:] != (t, t):
            raise ValueError(f"tile at {(r, c)} has shape {tile.shape}")
        acc[..., r:r + t, c:c + t] += tile
        count[r:r + t, c:c + t] += 1.0
    if (count == 0).any():
        raise AssertionError("tile layout does not cover the frame")
    return acc / count


def coverage_counts(layout: TileLayout) -> np.ndarray:
    count = np.zeros((layout.nrows, layout.ncols), np.int32)
    t = layout.tile
    for r, c in layout.origins:
        count[r:r + t, c:c + t] += 1
    return count


def export_manifest(starts, train_starts, eval_starts, stats: NormStats) -> str:
    """JSON debugging manifest of the windowing decisions."""
    return json.dumps({
        "origins": list(starts),
        "split": {"train": list(train_starts), "eval": list(eval_starts)},
        "stats": stats.to_dict(),
    }, indent=2)
