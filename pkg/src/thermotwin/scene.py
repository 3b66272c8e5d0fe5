"""Campus scene model: co-registered terrain, building, canopy and land-cover rasters.

Scenes come either from the seeded synthetic generator below or from GRD
files supplied by the user. Heights are stored relative to ground; the DEM
carries ground elevation separately so shadow casting can stack them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .grids import GrdMeta, load_raster_grd, save_raster_grd


class LandCover(IntEnum):
    PAVED = 0
    GRASS = 1
    TREE = 2
    WATER = 3
    BUILDING = 4
    BARE = 5


#: Classes a pedestrian cannot enter (routing) — building is additionally
#: the only class masked out of UTCI evaluation.
NON_WALKABLE = (LandCover.BUILDING, LandCover.WATER)

BUILDING_HEIGHT_RANGE = (8.0, 30.0)   # m
CANOPY_HEIGHT_RANGE = (5.0, 12.0)     # m

DEFAULT_LATITUDE = 30.6    # College Station-like anchor
DEFAULT_LONGITUDE = -96.3


class SceneSpecError(ValueError):
    """Requested synthetic features cannot fit in the grid."""


@dataclass(frozen=True)
class GridScene:
    nrows: int
    ncols: int
    cell_size: float
    latitude: float
    longitude: float
    dem: np.ndarray              # ground elevation, m
    building_height: np.ndarray  # m above ground, 0 where no building
    canopy_height: np.ndarray    # m above ground, 0 where no tree
    landcover: np.ndarray        # LandCover codes, uint8

    def __post_init__(self):
        for name in ("dem", "building_height", "canopy_height", "landcover"):
            arr = getattr(self, name)
            if arr.shape != (self.nrows, self.ncols):
                raise ValueError(
                    f"{name} shape {arr.shape} != ({self.nrows}, {self.ncols})")
            arr.setflags(write=False)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def walkable(self) -> np.ndarray:
        """Boolean raster of cells a pedestrian may occupy."""
        lc = self.landcover
        return (lc != LandCover.BUILDING) & (lc != LandCover.WATER)

    def building_mask(self) -> np.ndarray:
        return self.landcover == LandCover.BUILDING


@dataclass(frozen=True)
class SceneSpec:
    nrows: int
    ncols: int
    n_buildings: int = 0
    n_tree_clusters: int = 0
    parking_fraction: float = 0.0
    water: bool = False


@dataclass(frozen=True)
class Violation:
    raster: str
    rule: str
    cell: tuple | None = None

    def __str__(self):
        where = f" at cell {self.cell}" if self.cell is not None else ""
        return f"{self.raster}: {self.rule}{where}"


def _place_rect(rng, free, h, w, tries=2000):
    """Random top-left for an h x w rectangle of free cells, or None."""
    nr, nc = free.shape
    if h > nr or w > nc:
        return None
    for _ in range(tries):
        r = int(rng.integers(0, nr - h + 1))
        c = int(rng.integers(0, nc - w + 1))
        if free[r:r + h, c:c + w].all():
            return r, c
    return None


def _grow_blob(rng, available, start, target):
    """Randomized BFS growth of a contiguous blob; returns cell index array."""
    nr, nc = available.shape
    chosen = np.zeros_like(available, dtype=bool)
    frontier = [start]
    chosen[start] = True
    count = 1
    while count < target and frontier:
        i = int(rng.integers(0, len(frontier)))
        r, c = frontier.pop(i)
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < nr and 0 <= cc < nc and available[rr, cc] and not chosen[rr, cc]:
                chosen[rr, cc] = True
                frontier.append((rr, cc))
                count += 1
                if count >= target:
                    break
    return chosen, count


def generate_synthetic_scene(seed: int, spec: SceneSpec,
                             cell_size: float = 1.0,
                             latitude: float = DEFAULT_LATITUDE,
                             longitude: float = DEFAULT_LONGITUDE) -> GridScene:
    """Deterministically generate a campus-like scene from (seed, spec).

    Grass base, rectangular buildings 8-30 m tall, circular tree clusters
    with 5-12 m canopies, one contiguous paved parking area and an optional
    water body. Raises SceneSpecError when the requested features cannot be
    placed rather than silently truncating them.
    """
    nr, nc = spec.nrows, spec.ncols
    if nr < 64 or nc < 64:
        raise SceneSpecError(f"grid must be at least 64x64, got {nr}x{nc}")
    if not 0.0 <= spec.parking_fraction <= 1.0:
        raise SceneSpecError(f"parking_fraction must be in [0,1], got {spec.parking_fraction}")
    rng = np.random.default_rng(seed)

    landcover = np.full((nr, nc), LandCover.GRASS, dtype=np.uint8)
    building_height = np.zeros((nr, nc), dtype=np.float32)
    canopy_height = np.zeros((nr, nc), dtype=np.float32)
    dem = np.zeros((nr, nc), dtype=np.float32)  # flat campus

    # Buildings: rectangles with a 2-cell clearance so components stay separate.
    clearance = np.zeros((nr, nc), dtype=bool)
    for i in range(spec.n_buildings):
        bh = int(rng.integers(5, max(6, min(14, nr // 4)) + 1))
        bw = int(rng.integers(5, max(6, min(14, nc // 4)) + 1))
        pos = _place_rect(rng, ~clearance, bh + 4, bw + 4)
        if pos is None:
            raise SceneSpecError(
                f"could not place building {i + 1} of {spec.n_buildings} "
                f"in a {nr}x{nc} grid")
        r, c = pos[0] + 2, pos[1] + 2
        landcover[r:r + bh, c:c + bw] = LandCover.BUILDING
        building_height[r:r + bh, c:c + bw] = rng.uniform(*BUILDING_HEIGHT_RANGE)
        clearance[pos[0]:pos[0] + bh + 4, pos[1]:pos[1] + bw + 4] = True

    # Parking: one contiguous paved blob on grass.
    target = int(round(spec.parking_fraction * nr * nc))
    if target > 0:
        grass = landcover == LandCover.GRASS
        if target > grass.sum():
            raise SceneSpecError(
                f"parking_fraction {spec.parking_fraction} needs {target} grass "
                f"cells, only {int(grass.sum())} available")
        starts = np.argwhere(grass)
        start = tuple(starts[int(rng.integers(0, len(starts)))])
        blob, got = _grow_blob(rng, grass, start, target)
        if got < target:
            raise SceneSpecError(
                f"contiguous parking of {target} cells does not fit "
                f"(grew {got} before running out of room)")
        landcover[blob] = LandCover.PAVED

    # Tree clusters: discs on grass; canopy height constant per cluster.
    yy, xx = np.mgrid[0:nr, 0:nc]
    for i in range(spec.n_tree_clusters):
        radius = int(rng.integers(2, 7))
        placed = False
        for _ in range(2000):
            r = int(rng.integers(radius, nr - radius))
            c = int(rng.integers(radius, nc - radius))
            disc = (yy - r) ** 2 + (xx - c) ** 2 <= radius ** 2
            if (landcover[disc] == LandCover.GRASS).all():
                landcover[disc] = LandCover.TREE
                canopy_height[disc] = rng.uniform(*CANOPY_HEIGHT_RANGE)
                placed = True
                break
        if not placed:
            raise SceneSpecError(
                f"could not place tree cluster {i + 1} of {spec.n_tree_clusters}")

    if spec.water:
        radius = max(3, min(nr, nc) // 10)
        placed = False
        for _ in range(2000):
            r = int(rng.integers(radius, nr - radius))
            c = int(rng.integers(radius, nc - radius))
            disc = (yy - r) ** 2 + (xx - c) ** 2 <= radius ** 2
            if (landcover[disc] == LandCover.GRASS).all():
                landcover[disc] = LandCover.WATER
                placed = True
                break
        if not placed:
            raise SceneSpecError("could not place the water body")

    return GridScene(nr, nc, cell_size, latitude, longitude,
                     dem, building_height, canopy_height, landcover)


def validate_scene(scene: GridScene) -> list[Violation]:
    """Return all invariant violations (empty list means the scene is valid)."""
    out = []
    if scene.cell_size <= 0:
        out.append(Violation("scene", f"cell_size must be > 0, got {scene.cell_size}"))
    rasters = {"dem": scene.dem, "building_height": scene.building_height,
               "canopy_height": scene.canopy_height}
    for name, arr in rasters.items():
        bad = ~np.isfinite(np.asarray(arr, dtype=np.float64))
        for r, c in zip(*np.nonzero(bad)):
            out.append(Violation(name, "non-finite value", (int(r), int(c))))
    for name in ("building_height", "canopy_height"):
        arr = rasters[name]
        for r, c in zip(*np.nonzero(np.isfinite(arr) & (arr < 0))):
            out.append(Violation(name, "negative height", (int(r), int(c))))
    lc = scene.landcover
    for r, c in zip(*np.nonzero(lc > 5)):
        out.append(Violation("landcover", f"unknown class code {int(lc[r, c])}",
                             (int(r), int(c))))
    bh_pos = scene.building_height > 0
    is_bld = lc == LandCover.BUILDING
    for r, c in zip(*np.nonzero(bh_pos & ~is_bld)):
        out.append(Violation("building_height",
                             "positive height on a non-building cell",
                             (int(r), int(c))))
    for r, c in zip(*np.nonzero(is_bld & ~bh_pos)):
        out.append(Violation("building_height",
                             "building cell with zero height", (int(r), int(c))))
    ch_pos = scene.canopy_height > 0
    for r, c in zip(*np.nonzero(ch_pos & (lc != LandCover.TREE))):
        out.append(Violation("canopy_height",
                             "positive canopy on a non-tree cell", (int(r), int(c))))
    return out


_RASTER_FILES = {
    "dem": "dem.grd",
    "building_height": "building_height.grd",
    "canopy_height": "canopy_height.grd",
    "landcover": "landcover.grd",
}


def save_scene(scene: GridScene, directory) -> None:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    for name, fname in _RASTER_FILES.items():
        arr = getattr(scene, name).astype(np.float32)
        save_raster_grd(arr, path / fname, cell_size=scene.cell_size)
    meta = {"nrows": scene.nrows, "ncols": scene.ncols,
            "cell_size": scene.cell_size,
            "latitude": scene.latitude, "longitude": scene.longitude}
    (path / "scene.json").write_text(json.dumps(meta, indent=2))


def load_scene(directory) -> GridScene:
    path = Path(directory)
    meta = json.loads((path / "scene.json").read_text())
    rasters = {}
    for name, fname in _RASTER_FILES.items():
        arr, grd = load_raster_grd(path / fname)
        if (arr.shape[0], arr.shape[1]) != (meta["nrows"], meta["ncols"]):
            raise ValueError(f"{fname}: shape {arr.shape} does not match scene.json")
        rasters[name] = arr
    landcover = rasters.pop("landcover")
    return GridScene(meta["nrows"], meta["ncols"], meta["cell_size"],
                     meta["latitude"], meta["longitude"],
                     rasters["dem"],
                     rasters["building_height"],
                     rasters["canopy_height"],
                     np.round(landcover).astype(np.uint8))
