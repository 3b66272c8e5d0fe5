"""HTTP service for the digital twin: heatmaps, summaries, forecasts, routes.

Endpoints (all JSON unless noted):
    GET  /api/snapshots
    GET  /api/heatmap?snapshot=ID&t=ISO-or-index   (GRD bytes when the
         request prefers application/octet-stream)
    GET  /api/summary?snapshot=ID
    POST /api/forecast  {"snapshot": ID, "bbox": [r0,c0,r1,c1]?, "t0": ISO?}
    POST /api/route     {"snapshot": ID, "t": ISO, "origin": [r,c],
                         "destination": [r,c], "alpha": 0..1}

Errors come back as {"code": ..., "message": ...} with a matching HTTP
status. Snapshots are immutable once published and forecasts publish a new
snapshot atomically, so concurrent readers never observe partial data.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from .dataset import NormStats
from .metrics import compute_metrics
from .microclimate import (STRESS_BANDS, UtciStack, band_proportions,
                           load_stack_params)
from .routing import RouteError, build_grid_graph, shortest_path
from .snapshots import Snapshot, SnapshotStore
from .stvit import StVitConfig, load_checkpoint, predict_region


@dataclass(frozen=True)
class SummaryRow:
    time: str
    proportions: dict    # band label -> fraction of unmasked pixels
    mean: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {"time": self.time, "proportions": self.proportions,
                "mean": self.mean, "min": self.min, "max": self.max}


def summarize(stack: UtciStack) -> list[SummaryRow]:
    """Per-hour stress-band pixel proportions and basic stats."""
    rows = []
    for i in range(len(stack)):
        frame = stack.frames[i]
        props = band_proportions(frame, stack.mask)
        vals = frame[stack.mask & np.isfinite(frame)]
        rows.append(SummaryRow(
            stack.times[i].strftime("%Y-%m-%dT%H:%M:%S+00:00"),
            {label: float(p) for (label, _, _), p in zip(STRESS_BANDS, props)},
            float(vals.mean()), float(vals.min()), float(vals.max())))
    return rows


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


class TwinService:
    """Application logic behind the HTTP handler; also usable directly."""

    def __init__(self, data_dir, model_path=None):
        self.store = SnapshotStore(data_dir)
        if not self.store.has_scene():
            raise FileNotFoundError(f"no scene under {data_dir}")
        self.scene = self.store.load_scene()
        self._stacks = {}
        self._stack_lock = threading.Lock()
        self._forecast_lock = threading.Lock()
        self.model = None
        if model_path is not None:
            params, config, extra = load_checkpoint(model_path)
            if "stats" not in extra:
                raise ValueError(f"{model_path}: checkpoint lacks normalization stats")
            self.model = {
                "params": {k: np.asarray(v, config.np_dtype)
                           for k, v in params.items()},
                "config": config,
                "stats": NormStats.from_dict(extra["stats"]),
                "path": str(model_path),
            }

    # -- helpers ---------------------------------------------------------

    def _stack(self, snapshot_id: str) -> UtciStack:
        with self._stack_lock:
            if snapshot_id not in self._stacks:
                try:
                    self._stacks[snapshot_id] = self.store.load_stack(snapshot_id)
                except KeyError:
                    raise ApiError(404, "unknown_snapshot",
                                   f"snapshot {snapshot_id!r} not found")
            return self._stacks[snapshot_id]

    def _snapshot(self, snapshot_id: str) -> Snapshot:
        snap = self.store.get(snapshot_id)
        if snap is None:
            raise ApiError(404, "unknown_snapshot",
                           f"snapshot {snapshot_id!r} not found")
        return snap

    @staticmethod
    def _frame_index(stack: UtciStack, t) -> int:
        if t is None:
            raise ApiError(400, "missing_time", "query parameter t is required")
        times = [ts.strftime("%Y-%m-%dT%H:%M:%S+00:00") for ts in stack.times]
        if isinstance(t, str) and not t.isdigit():
            try:
                # '+00:00' in a query string may arrive as ' 00:00'
                cleaned = t.replace(" 00:00", "+00:00").replace("Z", "+00:00")
                target = datetime.fromisoformat(cleaned)
            except ValueError:
                raise ApiError(400, "bad_time", f"unparseable time {t!r}")
            target = target.strftime("%Y-%m-%dT%H:%M:%S+00:00")
            if target not in times:
                raise ApiError(404, "time_not_found",
                               f"{t} not in snapshot range {times[0]}..{times[-1]}")
            return times.index(target)
        idx = int(t)
        if not 0 <= idx < len(stack):
            raise ApiError(404, "time_not_found",
                           f"frame {idx} outside 0..{len(stack) - 1}")
        return idx

    # -- endpoint bodies ---------------------------------------------------

    def snapshots_payload(self) -> dict:
        return {"snapshots": [{
            "id": s.id, "kind": s.kind, "created_at": s.created_at,
            "n_frames": s.n_frames, "first": s.times[0], "last": s.times[-1],
            "provenance": s.provenance,
        } for s in self.store.list_snapshots()]}

    def heatmap_payload(self, snapshot_id: str, t) -> dict:
        stack = self._stack(snapshot_id)
        idx = self._frame_index(stack, t)
        frame = stack.frames[idx]
        vals = frame[stack.mask & np.isfinite(frame)]
        grid = [[None if not math.isfinite(v) else round(float(v), 3)
                 for v in row] for row in frame.tolist()]
        return {"snapshot": snapshot_id, "t": stack.times[idx].strftime(
                    "%Y-%m-%dT%H:%M:%S+00:00"),
                "index": idx, "nrows": frame.shape[0], "ncols": frame.shape[1],
                "min": float(vals.min()), "max": float(vals.max()),
                "values": grid}

    def heatmap_grd(self, snapshot_id: str, t) -> bytes:
        stack = self._stack(snapshot_id)
        idx = self._frame_index(stack, t)
        return self.store.frame_bytes(snapshot_id, idx)

    def summary_payload(self, snapshot_id: str) -> dict:
        stack = self._stack(snapshot_id)
        return {"snapshot": snapshot_id,
                "bands": [{"label": label,
                           "lower": None if lo == -math.inf else lo,
                           "upper": None if hi == math.inf else hi}
                          for label, lo, hi in STRESS_BANDS],
                "rows": [r.to_dict() for r in summarize(stack)]}

    def forecast(self, body: dict) -> dict:
        if self.model is None:
            raise ApiError(500, "no_model", "service started without a model")
        snapshot_id = body.get("snapshot")
        if not snapshot_id:
            raise ApiError(400, "missing_field", "snapshot is required")
        snap = self._snapshot(snapshot_id)
        stack = self._stack(snapshot_id)
        cfg: StVitConfig = self.model["config"]
        bbox = body.get("bbox")
        if bbox is not None:
            if (not isinstance(bbox, (list, tuple)) or len(bbox) != 4
                    or not all(isinstance(v, int) for v in bbox)):
                raise ApiError(400, "bad_bbox", "bbox must be [r0,c0,r1,c1]")
            bbox = tuple(bbox)
        t0 = body.get("t0")
        history_end = len(stack) if t0 is None else \
            self._frame_index(stack, t0) + 1
        if history_end < cfg.t_in:
            raise ApiError(400, "short_history",
                           f"need {cfg.t_in} hours before t0")
        series = _stack_meteo_series(snap.path)
        if series is None:
            raise ApiError(500, "no_meteo",
                           "snapshot has no meteo.csv for forecasting")
        with self._forecast_lock:  # single writer; readers unaffected
            try:
                result = predict_region(self.model["params"], cfg,
                                        self.model["stats"], self.scene,
                                        stack, series, history_end, bbox)
            except ValueError as exc:
                raise ApiError(400, "bad_request", str(exc))
            except Exception as exc:  # pragma: no cover - defensive
                raise ApiError(500, "forecast_failed", repr(exc))
            provenance = {"model": self.model["path"],
                          "source_snapshot": snapshot_id,
                          "bbox": list(bbox) if bbox else None,
                          "history_end": history_end,
                          "seconds": result.seconds}
            sim_spf = snap.provenance.get("seconds_per_frame")
            if sim_spf is not None and result.seconds > 0:
                # measured simulator-vs-model wall-clock ratio, reported only
                provenance["speed_ratio_vs_simulator"] = (
                    sim_spf * len(result.stack) / result.seconds)
            published = self.store.publish(result.stack, "predicted",
                                           provenance,
                                           cell_size=self.scene.cell_size)
        return {"id": published.id, "seconds": result.seconds,
                "n_tiles": result.n_tiles,
                "speed_ratio_vs_simulator":
                    provenance.get("speed_ratio_vs_simulator")}

    def route(self, body: dict) -> dict:
        for fieldname in ("snapshot", "t", "origin", "destination"):
            if fieldname not in body:
                raise ApiError(400, "missing_field", f"{fieldname} is required")
        stack = self._stack(body["snapshot"])
        idx = self._frame_index(stack, body["t"])
        alpha = body.get("alpha", 0.5)
        if not isinstance(alpha, (int, float)) or not 0 <= alpha <= 1:
            raise ApiError(400, "bad_alpha", "alpha must be in [0,1]")
        graph = build_grid_graph(self.scene, stack.frames[idx])
        try:
            route = shortest_path(graph, tuple(body["origin"]),
                                  tuple(body["destination"]), float(alpha))
        except RouteError as exc:
            raise ApiError(400, "bad_route_request", str(exc))
        if route is None:
            raise ApiError(404, "no_route", "destination unreachable")
        return route.to_dict()


def _stack_meteo_series(snapshot_path: Path):
    """Forecast inputs need the driving weather; simulate stores it beside
    the stack."""
    from .meteo import load_meteo_csv
    csv_path = Path(snapshot_path) / "meteo.csv"
    if not csv_path.exists():
        return None
    return load_meteo_csv(csv_path)


def make_handler(service: TwinService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, payload, content_type="application/json"):
            body = payload if isinstance(payload, bytes) else \
                json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods",
                             "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, exc: ApiError):
            self._send(exc.status, {"code": exc.code, "message": exc.message})

        def do_OPTIONS(self):
            self._send(204, b"", "text/plain")

        def do_GET(self):
            url = urlparse(self.path)
            query = {k: v[0] for k, v in parse_qs(url.query).items()}
            try:
                if url.path == "/api/snapshots":
                    self._send(200, service.snapshots_payload())
                elif url.path == "/api/heatmap":
                    snapshot = query.get("snapshot")
                    if not snapshot:
                        raise ApiError(400, "missing_field",
                                       "snapshot query parameter required")
                    accept = self.headers.get("Accept", "")
                    if "application/octet-stream" in accept:
                        data = service.heatmap_grd(snapshot, query.get("t"))
                        self._send(200, data, "application/octet-stream")
                    else:
                        self._send(200, service.heatmap_payload(
                            snapshot, query.get("t")))
                elif url.path == "/api/summary":
                    snapshot = query.get("snapshot")
                    if not snapshot:
                        raise ApiError(400, "missing_field",
                                       "snapshot query parameter required")
                    self._send(200, service.summary_payload(snapshot))
                else:
                    raise ApiError(404, "not_found", f"no route {url.path}")
            except ApiError as exc:
                self._error(exc)

        def do_POST(self):
            url = urlparse(self.path)
            try:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length) if length else b"{}"
                try:
                    body = json.loads(raw.decode() or "{}")
                except json.JSONDecodeError:
                    raise ApiError(400, "bad_json", "request body is not JSON")
                if not isinstance(body, dict):
                    raise ApiError(400, "bad_json", "request body must be an object")
                if url.path == "/api/forecast":
                    self._send(200, service.forecast(body))
                elif url.path == "/api/route":
                    self._send(200, service.route(body))
                else:
                    raise ApiError(404, "not_found", f"no route {url.path}")
            except ApiError as exc:
                self._error(exc)

    return Handler


def make_server(data_dir, model_path=None, host="127.0.0.1", port=0):
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    service = TwinService(data_dir, model_path)
    server = ThreadingHTTPServer((host, port), make_handler(service))
    server.service = service
    return server


def serve(data_dir, model_path=None, host="127.0.0.1", port=8765):
    server = make_server(data_dir, model_path, host, port)
    print(f"thermotwin service on http://{host}:{server.server_address[1]} "
          f"(data: {data_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0
