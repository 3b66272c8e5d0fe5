"""Snapshot store: immutable published UTCI stacks under a data directory.

Layout:
    <root>/scene/                 co-registered scene rasters
    <root>/snapshots/<id>/        one stack per snapshot (GRD frames + index)
                      meta.json   id, kind, created_at, provenance

Publication is atomic: a snapshot is staged in a dot-prefixed temp directory
and renamed into place, so concurrent readers either see the whole snapshot
or none of it.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .microclimate import MicroclimateParams, UtciStack, load_stack, save_stack
from .scene import GridScene, load_scene, save_scene


@dataclass(frozen=True)
class Snapshot:
    id: str
    kind: str            # "simulated" | "predicted"
    path: Path
    created_at: str
    provenance: dict
    n_frames: int
    times: tuple         # ISO strings


class SnapshotStore:
    """Directory-backed store; safe for many readers and one writer."""

    def __init__(self, root):
        self.root = Path(root)
        self.scene_dir = self.root / "scene"
        self.snap_dir = self.root / "snapshots"
        self.snap_dir.mkdir(parents=True, exist_ok=True)
        self._publish_lock = threading.Lock()

    # -- scene ---------------------------------------------------------

    def save_scene(self, scene: GridScene) -> None:
        save_scene(scene, self.scene_dir)

    def load_scene(self) -> GridScene:
        return load_scene(self.scene_dir)

    def has_scene(self) -> bool:
        return (self.scene_dir / "scene.json").exists()

    # -- snapshots -------------------------------------------------------

    def _read_meta(self, path: Path) -> Snapshot:
        meta = json.loads((path / "meta.json").read_text())
        index = json.loads((path / "index.json").read_text())
        return Snapshot(meta["id"], meta["kind"], path, meta["created_at"],
                        meta.get("provenance", {}), len(index["frames"]),
                        tuple(index["times"]))

    def list_snapshots(self) -> list[Snapshot]:
        out = []
        for path in sorted(self.snap_dir.iterdir()):
            if path.name.startswith(".") or not (path / "meta.json").exists():
                continue
            out.append(self._read_meta(path))
        return out

    def get(self, snapshot_id: str) -> Snapshot | None:
        path = self.snap_dir / snapshot_id
        if not path.is_dir() or path.name.startswith(".") \
                or not (path / "meta.json").exists():
            return None
        return self._read_meta(path)

    def load_stack(self, snapshot_id: str) -> UtciStack:
        snap = self.get(snapshot_id)
        if snap is None:
            raise KeyError(snapshot_id)
        return load_stack(snap.path)

    def frame_bytes(self, snapshot_id: str, frame_index: int) -> bytes:
        """Raw GRD bytes of one stored frame (byte-identical to disk)."""
        snap = self.get(snapshot_id)
        if snap is None:
            raise KeyError(snapshot_id)
        index = json.loads((snap.path / "index.json").read_text())
        return (snap.path / index["frames"][frame_index]).read_bytes()

    def publish(self, stack: UtciStack, kind: str, provenance: dict,
                params: MicroclimateParams | None = None,
                cell_size: float = 1.0, extra_files: dict | None = None) -> Snapshot:
        """Write the full snapshot to a temp dir, then rename into place.

        ``extra_files`` maps snapshot-relative names to source paths copied
        during staging (e.g. the driving meteo.csv a forecast will need).
        """
        if kind not in ("simulated", "predicted"):
            raise ValueError(f"bad snapshot kind {kind!r}")
        with self._publish_lock:
            n = sum(1 for p in self.snap_dir.iterdir()
                    if not p.name.startswith("."))
            snap_id = f"{kind}-{n:04d}"
            while (self.snap_dir / snap_id).exists():
                n += 1
                snap_id = f"{kind}-{n:04d}"
            tmp = self.snap_dir / f".tmp-{snap_id}-{os.getpid()}"
            save_stack(stack, tmp, params=params, cell_size=cell_size)
            for name, source in (extra_files or {}).items():
                (tmp / name).write_bytes(Path(source).read_bytes())
            meta = {"id": snap_id, "kind": kind,
                    "created_at": datetime.now(timezone.utc).isoformat(),
                    "provenance": provenance}
            (tmp / "meta.json").write_text(json.dumps(meta, indent=2))
            final = self.snap_dir / snap_id
            os.rename(tmp, final)
        return self._read_meta(final)
