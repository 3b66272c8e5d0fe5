import json
import threading
import urllib.request

import numpy as np
import pytest

from thermotwin.dataset import (build_training_windows, chronological_split,
                                fit_normalizer, make_windows)
from thermotwin.meteo import generate_synthetic_meteo, save_meteo_csv
from thermotwin.microclimate import (MicroclimateParams, band_proportions,
                                     simulate_stack)
from thermotwin.scene import SceneSpec, generate_synthetic_scene
from thermotwin.service import make_server, summarize
from thermotwin.snapshots import SnapshotStore
from thermotwin.stvit import (StVitConfig, init_params, predict_region,
                              save_checkpoint, train)


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    """Scene + 3-day simulation + tiny trained model, published to a store."""
    root = tmp_path_factory.mktemp("twin")
    scene = generate_synthetic_scene(8, SceneSpec(64, 64, n_buildings=2,
                                                  n_tree_clusters=2,
                                                  parking_fraction=0.05))
    series = generate_synthetic_meteo(3, 3)
    params_mc = MicroclimateParams()
    stack = simulate_stack(scene, params_mc, series)

    store = SnapshotStore(root)
    store.save_scene(scene)
    meteo_csv = root / "meteo.csv"
    save_meteo_csv(series, meteo_csv)
    snap = store.publish(stack, "simulated", {"seconds_per_frame": 0.05},
                         params=params_mc, extra_files={"meteo.csv": meteo_csv})

    cfg = StVitConfig(dtype="float32", max_epochs=1, seed=0)
    starts = make_windows(stack, series, stride=4)
    train_starts, eval_starts = chronological_split(starts)
    stats = fit_normalizer(stack, series, scene, train_starts)
    tw = build_training_windows(stack, series, scene, stats, train_starts)
    ew = build_training_windows(stack, series, scene, stats, eval_starts or
                                train_starts[-1:])
    params, _ = train(cfg, tw, ew)
    model_path = root / "model.stvt"
    save_checkpoint(model_path, params, cfg, extra={"stats": stats.to_dict()})

    server = make_server(root, model_path)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield {"base": base, "store": store, "snap": snap, "stack": stack,
           "scene": scene, "series": series, "cfg": cfg, "params": params,
           "stats": stats, "server": server, "service": server.service}
    server.shutdown()
    server.server_close()


def get(base, path, accept=None):
    req = urllib.request.Request(base + path)
    if accept:
        req.add_header("Accept", accept)
    with urllib.request.urlopen(req) as resp:
        body = resp.read()
        return resp.status, resp.headers.get("Content-Type"), body


def post(base, path, payload):
    req = urllib.request.Request(base + path, method="POST",
                                 data=json.dumps(payload).encode(),
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read().decode())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read().decode())


class TestEndpoints:
    def test_snapshots_list(self, world):
        status, _, body = get(world["base"], "/api/snapshots")
        assert status == 200
        snaps = json.loads(body)["snapshots"]
        assert any(s["id"] == world["snap"].id for s in snaps)
        assert snaps[0]["kind"] == "simulated"

    def test_heatmap_grd_is_byte_identical_to_disk(self, world):
        sid = world["snap"].id
        status, ctype, body = get(world["base"],
                                  f"/api/heatmap?snapshot={sid}&t=5",
                                  accept="application/octet-stream")
        assert status == 200 and ctype == "application/octet-stream"
        on_disk = world["store"].frame_bytes(sid, 5)
        assert body == on_disk

    def test_heatmap_json_matches_frame(self, world):
        sid = world["snap"].id
        status, _, body = get(world["base"], f"/api/heatmap?snapshot={sid}&t=5")
        payload = json.loads(body)
        frame = world["stack"].frames[5]
        assert payload["nrows"] == 64 and payload["ncols"] == 64
        got = payload["values"][10][10]
        want = frame[10, 10]
        if got is None:
            assert np.isnan(want)
        else:
            assert abs(got - float(want)) < 1e-3

    def test_heatmap_iso_time_lookup(self, world):
        from urllib.parse import quote
        sid = world["snap"].id
        t_iso = world["stack"].times[7].strftime("%Y-%m-%dT%H:%M:%S+00:00")
        _, _, body = get(world["base"],
                         f"/api/heatmap?snapshot={sid}&t={quote(t_iso)}")
        assert json.loads(body)["index"] == 7

    def test_summary_proportions_match_brute_force(self, world):
        sid = world["snap"].id
        _, _, body = get(world["base"], f"/api/summary?snapshot={sid}")
        payload = json.loads(body)
        rows = payload["rows"]
        assert len(rows) == len(world["stack"])
        # brute-force proportions for a daytime frame
        i = 14
        frame = world["stack"].frames[i]
        props = band_proportions(frame, world["stack"].mask)
        for j, (label, _, _) in enumerate(
                [("no",)*3, ("moderate",)*3, ("strong",)*3,
                 ("very_strong",)*3, ("extreme",)*3]):
            assert abs(rows[i]["proportions"][label] - props[j]) < 1e-12
        assert abs(sum(rows[i]["proportions"].values()) - 1.0) < 1e-9
        bands = payload["bands"]
        assert [b["label"] for b in bands] == \
            ["no", "moderate", "strong", "very_strong", "extreme"]
        assert bands[1]["lower"] == 26.0 and bands[1]["upper"] == 32.0

    def test_unknown_snapshot_404(self, world):
        status, payload = post(world["base"], "/api/route",
                               {"snapshot": "nope", "t": 0, "origin": [0, 0],
                                "destination": [1, 1]})
        assert status == 404
        assert payload["code"] == "unknown_snapshot"

    def test_malformed_body_400(self, world):
        req = urllib.request.Request(world["base"] + "/api/route",
                                     method="POST", data=b"not json",
                                     headers={"Content-Type": "application/json"})
        try:
            urllib.request.urlopen(req)
            raise AssertionError("expected 400")
        except urllib.error.HTTPError as exc:
            assert exc.code == 400
            assert json.loads(exc.read())["code"] == "bad_json"

    def test_route_endpoint(self, world):
        sid = world["snap"].id
        walk = np.argwhere(world["scene"].walkable())
        origin = [int(v) for v in walk[0]]
        dest = [int(v) for v in walk[-1]]
        status, payload = post(world["base"], "/api/route",
                               {"snapshot": sid, "t": 12, "origin": origin,
                                "destination": dest, "alpha": 0.5})
        assert status == 200
        assert payload["path"][0] == origin and payload["path"][-1] == dest
        assert payload["length_m"] > 0

    def test_route_from_building_400(self, world):
        sid = world["snap"].id
        building = np.argwhere(~world["scene"].walkable())
        origin = [int(v) for v in building[0]]
        status, payload = post(world["base"], "/api/route",
                               {"snapshot": sid, "t": 12, "origin": origin,
                                "destination": [0, 0], "alpha": 0.5})
        assert status == 400
        assert "origin" in payload["message"]

    def test_forecast_matches_library_predict(self, world):
        sid = world["snap"].id
        status, payload = post(world["base"], "/api/forecast",
                               {"snapshot": sid})
        assert status == 200, payload
        new_id = payload["id"]
        assert new_id.startswith("predicted-")
        served = world["store"].load_stack(new_id)
        # identical inputs = the snapshot's own meteo.csv (written at fixed
        # precision), exactly what the endpoint consumed
        from thermotwin.meteo import load_meteo_csv
        snap_series = load_meteo_csv(world["snap"].path / "meteo.csv")
        direct = predict_region(
            {k: np.asarray(v, np.float32) for k, v in world["params"].items()},
            world["cfg"], world["stats"], world["scene"], world["stack"],
            snap_series, len(world["stack"]))
        assert np.array_equal(served.frames, direct.stack.frames,
                              equal_nan=True)

    def test_forecast_appears_in_snapshot_list(self, world):
        _, _, body = get(world["base"], "/api/snapshots")
        snaps = json.loads(body)["snapshots"]
        assert any(s["kind"] == "predicted" for s in snaps)


class TestConcurrency:
    def test_parallel_readers_never_see_partial_snapshots(self, world):
        """16 readers hammer list+heatmap while a publisher adds snapshots."""
        service = world["service"]
        store: SnapshotStore = world["store"]
        stack = world["stack"]
        errors = []
        stop = threading.Event()

        def reader():
            try:
                while not stop.is_set():
                    snaps = store.list_snapshots()
                    for s in snaps:
                        # every listed snapshot must be fully readable
                        data = store.frame_bytes(s.id, 0)
                        assert data[:5] == b"GRD1\n"
                        meta = json.loads((s.path / "meta.json").read_text())
                        assert meta["id"] == s.id
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=reader) for _ in range(16)]
        for t in threads:
            t.start()
        for _ in range(4):
            store.publish(stack, "simulated", {"stress": True})
        stop.set()
        for t in threads:
            t.join(timeout=30)
        assert not errors

    def test_published_snapshots_are_immutable(self, world):
        sid = world["snap"].id
        a = get(world["base"], f"/api/heatmap?snapshot={sid}&t=3",
                accept="application/octet-stream")[2]
        b = get(world["base"], f"/api/heatmap?snapshot={sid}&t=3",
                accept="application/octet-stream")[2]
        assert a == b
