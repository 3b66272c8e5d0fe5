"""GRD raster file format: bit-exact reader/writer for single-band float32 grids.

Layout: six ASCII header lines (``GRD1``, ``nrows N``, ``ncols N``,
``cell_size F``, ``nodata F``, ``dtype f32``), one blank line, then the
payload as row-major little-endian float32 with row 0 the northernmost row.
No-data cells are stored as the ``nodata`` sentinel and surface as NaN in
memory; every other payload value must be finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_NODATA = -9999.0

MAGIC = b"GRD1\n"


class GrdError(ValueError):
    """Raised when a GRD file cannot be parsed or written."""


@dataclass(frozen=True)
class GrdMeta:
    nrows: int
    ncols: int
    cell_size: float = 1.0
    nodata: float = DEFAULT_NODATA


def save_raster_grd(raster, path, cell_size: float = 1.0,
                    nodata: float = DEFAULT_NODATA) -> None:
    """Write a 2-D raster to ``path``. NaN cells are encoded as ``nodata``."""
    arr = np.asarray(raster, dtype=np.float32)
    if arr.ndim != 2:
        raise GrdError(f"raster must be 2-D, got shape {arr.shape}")
    nan_mask = np.isnan(arr)
    if not np.isfinite(arr[~nan_mask]).all():
        raise GrdError("raster contains non-finite values other than NaN")
    out = arr.copy()
    out[nan_mask] = np.float32(nodata)
    header = (
        MAGIC
        + f"nrows {arr.shape[0]}\n".encode()
        + f"ncols {arr.shape[1]}\n".encode()
        + f"cell_size {float(cell_size)!r}\n".encode()
        + f"nodata {float(nodata)!r}\n".encode()
        + b"dtype f32\n"
        + b"\n"
    )
    payload = out.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_raster_grd(path):
    """Read a GRD file.

    Returns ``(array, meta)`` where masked cells are NaN in ``array``.
    Parse failures report the byte offset at which they were detected.
    """
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise GrdError(f"{path}: bad magic at byte 0 (expected {MAGIC!r})")
    offset = len(MAGIC)
    fields = {}
    for key, conv in (("nrows", int), ("ncols", int),
                      ("cell_size", float), ("nodata", float),
                      ("dtype", str)):
        end = data.find(b"\n", offset)
        if end < 0:
            raise GrdError(f"{path}: truncated header at byte {offset}")
        line = data[offset:end].decode("ascii", errors="replace")
        parts = line.split(" ", 1)
        if len(parts) != 2 or parts[0] != key:
            raise GrdError(f"{path}: expected '{key} <value>' at byte {offset}, got {line!r}")
        try:
            fields[key] = conv(parts[1])
        except ValueError as exc:
            raise GrdError(f"{path}: bad {key} value at byte {offset}: {parts[1]!r}") from exc
        offset = end + 1
    if fields["dtype"] != "f32":
        raise GrdError(f"{path}: unsupported dtype {fields['dtype']!r}")
    if data[offset:offset + 1] != b"\n":
        raise GrdError(f"{path}: missing blank separator line at byte {offset}")
    offset += 1
    nrows, ncols = fields["nrows"], fields["ncols"]
    if nrows <= 0 or ncols <= 0:
        raise GrdError(f"{path}: non-positive grid shape {nrows}x{ncols}")
    expected = nrows * ncols * 4
    found = len(data) - offset
    if found != expected:
        raise GrdError(
            f"{path}: payload at byte {offset} has {found} bytes, "
            f"expected {expected} ({nrows}x{ncols} float32)")
    arr = np.frombuffer(data, dtype="<f4", count=nrows * ncols,
                        offset=offset).reshape(nrows, ncols).copy()
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise GrdError(
            f"{path}: non-finite value at byte {offset + 4 * idx} "
            f"(cell {idx // ncols},{idx % ncols})")
    meta = GrdMeta(nrows, ncols, fields["cell_size"], fields["nodata"])
    arr[arr == np.float32(meta.nodata)] = np.nan
    return arr, meta
