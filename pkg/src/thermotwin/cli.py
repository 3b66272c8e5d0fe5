"""Command-line interface: scene gen | simulate | heatwave | train | predict |
eval | route | serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import report
from .dataset import (build_training_windows, chronological_split,
                      fit_normalizer, make_windows)
from .grids import GrdError
from .meteo import (DEFAULT_THRESHOLD_C, HeatwaveSpec, MeteoError,
                    daily_maxima, detect_heatwaves, generate_synthetic_meteo,
                    load_meteo_csv, save_meteo_csv, study_window)
from .metrics import compute_metrics, per_hour_metrics, per_landcover_metrics
from .microclimate import (MicroclimateParams, load_stack, save_stack,
                           simulate_stack)
from .scene import (SceneSpec, SceneSpecError, generate_synthetic_scene,
                    load_scene, save_scene, validate_scene)
from .service import serve as serve_http
from .snapshots import SnapshotStore
from .stvit import (StVitConfig, load_checkpoint, persistence_baseline,
                    predict_region, save_checkpoint, train)


def _fail(message: str, code: int = 1) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_scene_gen(args) -> int:
    spec = SceneSpec(args.rows, args.cols, n_buildings=args.buildings,
                     n_tree_clusters=args.trees,
                     parking_fraction=args.parking, water=args.water)
    try:
        scene = generate_synthetic_scene(args.seed, spec)
    except SceneSpecError as exc:
        return _fail(str(exc))
    violations = validate_scene(scene)
    if violations:  # generator bug guard; should never trigger
        return _fail(f"generated scene violates invariants: {violations[0]}")
    save_scene(scene, args.out)
    print(f"scene {args.rows}x{args.cols} (seed {args.seed}) -> {args.out}")
    return 0


def cmd_meteo_gen(args) -> int:
    heatwave = None
    if args.heatwave_start is not None:
        heatwave = HeatwaveSpec(args.heatwave_start, args.heatwave_days,
                                args.amplitude)
    try:
        series = generate_synthetic_meteo(
            args.seed, args.days, heatwave,
            diurnal_amplitude=args.diurnal,
            level_sigma=args.level_sigma, level_phi=args.level_phi,
            hourly_sigma=args.hourly_sigma)
    except MeteoError as exc:
        return _fail(str(exc))
    save_meteo_csv(series, args.out)
    print(f"{args.days} days of synthetic weather (seed {args.seed}) -> {args.out}")
    return 0


def cmd_publish(args) -> int:
    """Assemble a service data directory from CLI outputs."""
    store = SnapshotStore(args.data_dir)
    try:
        if args.scene:
            store.save_scene(load_scene(args.scene))
        if args.stack:
            stack = load_stack(args.stack)
            provenance = {"source": str(args.stack)}
            timing = Path(args.stack) / "timing.json"
            if timing.exists():
                provenance.update(json.loads(timing.read_text()))
            extra = {}
            meteo = Path(args.stack) / "meteo.csv"
            if meteo.exists():
                extra["meteo.csv"] = meteo
            snap = store.publish(stack, args.kind, provenance,
                                 extra_files=extra)
            print(f"published {snap.id} ({len(stack)} frames)")
    except (GrdError, OSError, ValueError) as exc:
        return _fail(str(exc))
    return 0


def cmd_simulate(args) -> int:
    try:
        scene = load_scene(args.scene)
        series = load_meteo_csv(args.meteo)
    except (MeteoError, GrdError, OSError) as exc:
        return _fail(str(exc))
    params = MicroclimateParams()
    if args.params:
        params = MicroclimateParams.from_dict(json.loads(Path(args.params).read_text()))
    t0 = time.perf_counter()
    stack = simulate_stack(scene, params, series)
    seconds = time.perf_counter() - t0
    save_stack(stack, args.out, params=params, cell_size=scene.cell_size)
    # keep the driving weather next to the stack so forecasts can reuse it
    save_meteo_csv(series, Path(args.out) / "meteo.csv")
    meta = {"seconds": seconds, "seconds_per_frame": seconds / len(stack),
            "n_frames": len(stack)}
    (Path(args.out) / "timing.json").write_text(json.dumps(meta, indent=2))
    print(f"simulated {len(stack)} frames in {seconds:.2f}s -> {args.out}")
    return 0


def cmd_heatwave(args) -> int:
    try:
        series = load_meteo_csv(args.meteo)
    except (MeteoError, OSError) as exc:
        return _fail(str(exc))
    events = detect_heatwaves(series, args.threshold, args.min_days)
    payload = []
    for ev in events:
        try:
            win = study_window(ev, args.pad, series)
        except MeteoError:
            win = study_window(ev, args.pad)
        payload.append({
            "start": win.start_day.isoformat(), "end": win.end_day.isoformat(),
            "days": win.n_days, "threshold": win.threshold,
            "window_start": win.window_start.isoformat(),
            "window_end": win.window_end.isoformat(),
            "window_days": win.window_days,
        })
    print(json.dumps({"threshold": args.threshold, "events": payload}, indent=2))
    if args.plot:
        daily = daily_maxima(series)
        report.plot_daily_maxima(args.plot, [d for d, _ in daily],
                                 [m for _, m in daily], args.threshold, events)
    return 0


def cmd_train(args) -> int:
    try:
        scene = load_scene(args.scene)
        series = load_meteo_csv(args.meteo)
        stack = load_stack(args.data)
    except (MeteoError, GrdError, OSError) as exc:
        return _fail(str(exc))
    config = StVitConfig(seed=args.seed, dtype=args.dtype,
                         max_epochs=args.epochs)
    starts = make_windows(stack, series, config.t_in, config.t_out, args.stride)
    train_starts, eval_starts = chronological_split(starts)
    if not eval_starts:
        return _fail("series too short: no evaluation windows after the split")
    stats = fit_normalizer(stack, series, scene, train_starts,
                           config.t_in, config.t_out)
    train_w = build_training_windows(stack, series, scene, stats, train_starts,
                                     config.t_in, config.t_out, seed=config.seed)
    eval_w = build_training_windows(stack, series, scene, stats, eval_starts,
                                    config.t_in, config.t_out,
                                    seed=config.seed + 1)
    params, rep = train(config, train_w, eval_w, max_seconds=args.budget,
                        log=lambda msg: print(msg, flush=True))
    save_checkpoint(args.out, params, config,
                    extra={"stats": stats.to_dict(),
                           "train_report": {"best_epoch": rep.best_epoch,
                                            "best_val_loss": rep.best_val_loss,
                                            "epochs": len(rep.epochs),
                                            "stopped": rep.stopped_reason}})
    print(f"trained: {rep.summary()} -> {args.out}")
    return 0


def _parse_bbox(text):
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("bbox must be r0,c0,r1,c1")
    return tuple(parts)


def cmd_predict(args) -> int:
    try:
        params, config, extra = load_checkpoint(args.model)
        scene = load_scene(args.scene)
        series = load_meteo_csv(args.meteo)
        stack = load_stack(args.data)
        bbox = _parse_bbox(args.bbox) if args.bbox else None
    except (ValueError, MeteoError, GrdError, OSError) as exc:
        return _fail(str(exc))
    from .dataset import NormStats
    if "stats" not in extra:
        return _fail(f"{args.model}: checkpoint lacks normalization stats")
    stats = NormStats.from_dict(extra["stats"])
    params = {k: np.asarray(v, config.np_dtype) for k, v in params.items()}
    if args.t0:
        target = datetime.fromisoformat(args.t0.replace("Z", "+00:00"))
        times = list(stack.times)
        if target not in times:
            return _fail(f"t0 {args.t0} not found in the stack")
        history_end = times.index(target) + 1
    else:
        history_end = len(stack)
    try:
        result = predict_region(params, config, stats, scene, stack, series,
                                history_end, bbox)
    except ValueError as exc:
        return _fail(str(exc))
    save_stack(result.stack, args.out, cell_size=scene.cell_size)
    timing = {"seconds": result.seconds, "n_tiles": result.n_tiles}
    sim_timing = Path(args.data) / "timing.json"
    if sim_timing.exists():
        spf = json.loads(sim_timing.read_text()).get("seconds_per_frame")
        if spf:
            timing["speed_ratio_vs_simulator"] = \
                spf * len(result.stack) / result.seconds
    (Path(args.out) / "timing.json").write_text(json.dumps(timing, indent=2))
    print(f"predicted {len(result.stack)} frames in {result.seconds:.2f}s "
          f"-> {args.out}")
    return 0


def cmd_eval(args) -> int:
    try:
        truth = load_stack(args.truth)
        pred = load_stack(args.pred)
    except (GrdError, OSError) as exc:
        return _fail(str(exc))
    if truth.shape != pred.shape:
        return _fail(f"shape mismatch {truth.shape} vs {pred.shape}")
    n = min(len(truth), len(pred))
    # align on the prediction's time range when the truth stack is longer
    t_offset = 0
    if len(truth) != len(pred) and pred.times[0] in truth.times:
        t_offset = truth.times.index(pred.times[0])
    t_frames = truth.frames[t_offset:t_offset + n]
    p_frames = pred.frames[:n]
    mask = truth.mask & pred.mask
    overall = compute_metrics(t_frames, p_frames, mask)
    hourly = per_hour_metrics(t_frames, p_frames, mask)
    payload = {"overall": overall.to_dict(),
               "per_hour": [m.to_dict() for m in hourly]}
    timing = Path(args.pred) / "timing.json"
    if timing.exists():
        payload["timing"] = json.loads(timing.read_text())
    by_class = {}
    if args.scene:
        scene = load_scene(args.scene)
        from .scene import LandCover
        labels = [c.name.lower() for c in sorted(LandCover, key=int)]
        by_class = per_landcover_metrics(t_frames, p_frames, mask,
                                         scene.landcover, labels)
        payload["per_landcover"] = {k: v.to_dict() for k, v in by_class.items()}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, indent=2))
    if args.report_dir:
        rd = Path(args.report_dir)
        rd.mkdir(parents=True, exist_ok=True)
        times = [t.isoformat() for t in pred.times[:n]]
        report.write_hourly_csv(rd / "hourly_metrics.csv", times, hourly)
        report.plot_hourly_error(rd / "error_by_hour.png", times, hourly)
        if by_class:
            report.plot_landcover_error(rd / "error_by_landcover.png", by_class)
        from .service import summarize
        report.plot_band_timeline(rd / "stress_bands.png", summarize(truth))
    mape = "n/a" if overall.mape is None else f"{overall.mape:.3f}%"
    print(f"rmse {overall.rmse:.4f}  mae {overall.mae:.4f}  mape {mape} "
          f"-> {args.out}")
    return 0


def cmd_route(args) -> int:
    try:
        scene = load_scene(args.scene)
        stack = load_stack(args.stack)
    except (GrdError, OSError) as exc:
        return _fail(str(exc))
    from .routing import RouteError, build_grid_graph, shortest_path
    times = [t.strftime("%Y-%m-%dT%H:%M:%S+00:00") for t in stack.times]
    key = args.hour
    if key.isdigit():
        idx = int(key)
        if not 0 <= idx < len(stack):
            return _fail(f"hour index {idx} outside 0..{len(stack) - 1}")
    else:
        target = datetime.fromisoformat(key.replace("Z", "+00:00")) \
            .strftime("%Y-%m-%dT%H:%M:%S+00:00")
        if target not in times:
            return _fail(f"hour {args.hour} not in the stack")
        idx = times.index(target)
    try:
        origin = tuple(int(v) for v in args.origin.split(","))
        dest = tuple(int(v) for v in args.dest.split(","))
        graph = build_grid_graph(scene, stack.frames[idx])
        route = shortest_path(graph, origin, dest, args.alpha)
    except (RouteError, ValueError) as exc:
        return _fail(str(exc))
    if route is None:
        return _fail("destination unreachable")
    print(json.dumps(route.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    data_dir = args.data_dir or os.environ.get("THERMOTWIN_DATA_DIR")
    if not data_dir:
        return _fail("--data-dir or THERMOTWIN_DATA_DIR is required", 2)
    try:
        return serve_http(data_dir, args.model, args.host, args.port)
    except (FileNotFoundError, ValueError) as exc:
        return _fail(str(exc))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermotwin",
        description="Campus heat-stress digital twin: simulate, forecast, "
                    "route, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene utilities")
    scene_sub = scene.add_subparsers(dest="scene_command", required=True)
    gen = scene_sub.add_parser("gen", help="generate a synthetic scene")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--rows", type=int, required=True)
    gen.add_argument("--cols", type=int, required=True)
    gen.add_argument("--buildings", type=int, default=6)
    gen.add_argument("--trees", type=int, default=5)
    gen.add_argument("--parking", type=float, default=0.08)
    gen.add_argument("--water", action="store_true")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_scene_gen)

    met = sub.add_parser("meteo", help="weather utilities")
    met_sub = met.add_subparsers(dest="meteo_command", required=True)
    mgen = met_sub.add_parser("gen", help="generate synthetic hourly weather")
    mgen.add_argument("--seed", type=int, required=True)
    mgen.add_argument("--days", type=int, required=True)
    mgen.add_argument("--out", required=True)
    mgen.add_argument("--heatwave-start", type=int,
                      help="1-based first heat-wave day")
    mgen.add_argument("--heatwave-days", type=int, default=8)
    mgen.add_argument("--amplitude", type=float, default=4.0)
    mgen.add_argument("--diurnal", type=float, default=4.0)
    mgen.add_argument("--level-sigma", type=float, default=1.0)
    mgen.add_argument("--level-phi", type=float, default=0.5)
    mgen.add_argument("--hourly-sigma", type=float, default=0.4)
    mgen.set_defaults(func=cmd_meteo_gen)

    pub = sub.add_parser("publish",
                         help="copy a scene/stack into a service data dir")
    pub.add_argument("--data-dir", required=True)
    pub.add_argument("--scene")
    pub.add_argument("--stack")
    pub.add_argument("--kind", choices=("simulated", "predicted"),
                     default="simulated")
    pub.set_defaults(func=cmd_publish)

    sim = sub.add_parser("simulate", help="run the UTCI simulator")
    sim.add_argument("--scene", required=True)
    sim.add_argument("--meteo", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--params", help="JSON file of microclimate parameters")
    sim.set_defaults(func=cmd_simulate)

    hw = sub.add_parser("heatwave", help="detect heat-wave periods")
    hw.add_argument("--meteo", required=True)
    hw.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_C)
    hw.add_argument("--min-days", type=int, default=3)
    hw.add_argument("--pad", type=int, default=3)
    hw.add_argument("--plot", help="write a daily-maxima figure to this path")
    hw.set_defaults(func=cmd_heatwave)

    tr = sub.add_parser("train", help="train the forecaster")
    tr.add_argument("--data", required=True, help="simulated stack directory")
    tr.add_argument("--scene", required=True)
    tr.add_argument("--meteo", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--stride", type=int, default=4)
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--dtype", choices=("float64", "float32"),
                    default="float64")
    tr.add_argument("--budget", type=float, default=None,
                    help="optional wall-clock training budget in seconds")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="forecast with a trained model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True, help="stack with input history")
    pr.add_argument("--scene", required=True)
    pr.add_argument("--meteo", required=True)
    pr.add_argument("--bbox", help="r0,c0,r1,c1 (default full frame)")
    pr.add_argument("--t0", help="last observed hour (ISO); default stack end")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("eval", help="compare two stacks")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--out", default="metrics.json")
    ev.add_argument("--scene", help="scene for per-landcover breakdowns")
    ev.add_argument("--report-dir", help="write CSV + figures here")
    ev.set_defaults(func=cmd_eval)

    rt = sub.add_parser("route", help="thermal-aware route on one frame")
    rt.add_argument("--stack", required=True)
    rt.add_argument("--scene", required=True)
    rt.add_argument("--hour", required=True, help="ISO time or frame index")
    rt.add_argument("--from", dest="origin", required=True, help="r,c")
    rt.add_argument("--to", dest="dest", required=True, help="r,c")
    rt.add_argument("--alpha", type=float, default=0.5)
    rt.set_defaults(func=cmd_route)

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--data-dir")
    sv.add_argument("--model")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8765)
    sv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
