/** DOM controller: wires the API and the pure state/raster helpers to the
 * canvas, slider and panels. One heatmap fetch per hour change (served from
 * the LRU when possible), at most one forecast in flight, stale slider
 * responses dropped. */

import { ApiError, TwinApi } from "./api.js";
import type { HeatmapPayload, SummaryPayload, SnapshotInfo } from "./api.js";
import { legendMatchesServer, STRESS_BANDS } from "./colors.js";
import { FrameCache, cellAt, hoverInfo, rasterize } from "./heatmap.js";
import { initialState, transition, bboxTooSmall } from "./state.js";
import type { BBox, ViewEvent, ViewState } from "./state.js";

const CANVAS_SIZE = 640;

export class App {
  state: ViewState = initialState();
  heatmapFetches = 0; // instrumentation: one per slider change
  private cache = new FrameCache();
  private snapshots: SnapshotInfo[] = [];
  private summary: SummaryPayload | null = null;
  private currentFrame: HeatmapPayload | null = null;
  private frameEpoch = 0;
  private dragStart: [number, number] | null = null;

  constructor(private api: TwinApi, private root: Document) {}

  private el<T extends HTMLElement>(id: string): T {
    const node = this.root.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
  }

  dispatch(event: ViewEvent): void {
    this.state = transition(this.state, event);
    this.renderChrome();
  }

  async start(): Promise<void> {
    this.bindControls();
    await this.refreshSnapshots();
    const first = this.snapshots[0];
    if (first) {
      await this.selectSnapshot(first.id);
    }
  }

  async refreshSnapshots(): Promise<void> {
    try {
      const { snapshots } = await this.api.listSnapshots();
      this.snapshots = snapshots;
      const select = this.el<HTMLSelectElement>("snapshot-select");
      select.innerHTML = "";
      for (const snap of snapshots) {
        const opt = this.root.createElement("option");
        opt.value = snap.id;
        opt.textContent = `${snap.id} (${snap.kind}, ${snap.n_frames} h)`;
        select.appendChild(opt);
      }
      if (this.state.snapshotId) select.value = this.state.snapshotId;
    } catch (err) {
      this.dispatch({ kind: "fetch_failed", message: String(err) });
    }
  }

  async selectSnapshot(id: string): Promise<void> {
    const info = this.snapshots.find(s => s.id === id);
    if (!info) return;
    this.dispatch({
      kind: "snapshot_selected", id, nHours: info.n_frames,
      predicted: info.kind === "predicted",
    });
    try {
      this.summary = await this.api.summary(id);
      if (!legendMatchesServer(this.summary.bands)) {
        this.dispatch({
          kind: "fetch_failed",
          message: "legend bands disagree with the service",
        });
      }
    } catch (err) {
      this.dispatch({ kind: "fetch_failed", message: String(err) });
    }
    await this.showHour(this.state.hour);
    this.renderLegend();
  }

  /** Fetch (or reuse) and draw the frame for an hour; exactly one request
   * per change when the frame is not cached. */
  async showHour(hour: number): Promise<void> {
    const id = this.state.snapshotId;
    if (!id) return;
    this.dispatch({ kind: "hour_changed", hour });
    const epoch = ++this.frameEpoch;
    let frame = this.cache.get(id, this.state.hour);
    if (!frame) {
      this.heatmapFetches += 1;
      try {
        frame = await this.api.heatmap(id, this.state.hour);
      } catch (err) {
        this.dispatch({ kind: "fetch_failed", message: String(err) });
        return;
      }
      this.cache.put(id, this.state.hour, frame);
    }
    if (epoch !== this.frameEpoch) return; // a newer slider move won
    this.currentFrame = frame;
    this.dispatch({ kind: "frame_loaded", min: frame.min, max: frame.max });
    this.paint();
    this.renderSummaryRow();
  }

  private bindControls(): void {
    const slider = this.el<HTMLInputElement>("hour-slider");
    slider.addEventListener("input", () => {
      void this.showHour(Number(slider.value));
    });
    this.el<HTMLSelectElement>("snapshot-select").addEventListener(
      "change", (ev) => {
        void this.selectSnapshot((ev.target as HTMLSelectElement).value);
      });
    const alpha = this.el<HTMLInputElement>("alpha-slider");
    alpha.addEventListener("input", () => {
      this.dispatch({ kind: "alpha_changed", alpha: Number(alpha.value) });
      void this.requestRoute();
    });
    this.el<HTMLButtonElement>("forecast-btn").addEventListener(
      "click", () => void this.requestForecast());
    const canvas = this.el<HTMLCanvasElement>("heatmap");
    canvas.width = CANVAS_SIZE;
    canvas.height = CANVAS_SIZE;
    canvas.addEventListener("mousedown", (ev) => {
      if (this.el<HTMLInputElement>("mode-region").checked) {
        this.dragStart = this.eventCell(ev, canvas);
      }
    });
    canvas.addEventListener("mouseup", (ev) => {
      const cell = this.eventCell(ev, canvas);
      if (this.el<HTMLInputElement>("mode-region").checked && this.dragStart) {
        const [r0, c0] = this.dragStart;
        const [r1, c1] = cell;
        this.dragStart = null;
        const bbox: BBox = {
          r0: Math.min(r0, r1), c0: Math.min(c0, c1),
          r1: Math.max(r0, r1) + 1, c1: Math.max(c0, c1) + 1,
        };
        this.dispatch({ kind: "bbox_selected", bbox });
        this.paint();
      } else if (this.el<HTMLInputElement>("mode-route").checked) {
        this.dispatch({ kind: "od_clicked", cell });
        this.paint();
        if (this.state.origin && this.state.destination) {
          void this.requestRoute();
        }
      }
    });
    canvas.addEventListener("mousemove", (ev) => {
      if (!this.currentFrame) return;
      const [row, col] = this.eventCell(ev, canvas);
      const info = hoverInfo(this.currentFrame, row, col);
      const label = this.el<HTMLElement>("hover-info");
      if (!info || info.utci === null) {
        label.textContent = info ? `(${info.row},${info.col}) building` : "";
      } else {
        label.textContent =
          `(${info.row},${info.col}) ${info.utci.toFixed(1)} degC — ` +
          `${info.category!.replace("_", " ")} stress`;
      }
    });
  }

  private eventCell(ev: MouseEvent, canvas: HTMLCanvasElement): [number, number] {
    const rect = canvas.getBoundingClientRect();
    const frame = this.currentFrame;
    const nrows = frame ? frame.nrows : 64;
    const ncols = frame ? frame.ncols : 64;
    return cellAt(ev.clientX - rect.left, ev.clientY - rect.top,
                  rect.width, rect.height, nrows, ncols);
  }

  async requestForecast(): Promise<void> {
    const id = this.state.snapshotId;
    if (!id || this.state.forecastInFlight) return;
    const bbox = this.state.bbox;
    if (bbox && bboxTooSmall(bbox)) {
      this.dispatch({ kind: "bbox_selected", bbox }); // re-raise the hint
      return;
    }
    this.dispatch({ kind: "forecast_requested" });
    try {
      const resp = await this.api.forecast(
        id, bbox ? [bbox.r0, bbox.c0, bbox.r1, bbox.c1] : undefined);
      this.dispatch({ kind: "forecast_done", id: resp.id });
      await this.refreshSnapshots();
      await this.selectSnapshot(resp.id);
    } catch (err) {
      const message = err instanceof ApiError ? err.body.message : String(err);
      this.dispatch({ kind: "forecast_failed", message });
    }
  }

  async requestRoute(): Promise<void> {
    const { snapshotId, origin, destination, hour, alpha } = this.state;
    if (!snapshotId || !origin || !destination) return;
    try {
      const route = await this.api.route(snapshotId, hour, origin,
                                         destination, alpha);
      this.dispatch({
        kind: "route_loaded",
        route: { path: route.path, lengthM: route.length_m,
                 avgUtci: route.avg_utci, alpha: route.alpha },
      });
      this.paint();
      this.renderRoutePanel();
    } catch (err) {
      const message = err instanceof ApiError ? err.body.message : String(err);
      this.dispatch({ kind: "route_failed", message });
    }
  }

  /** Blit the current frame plus overlays (bbox, OD markers, route). */
  paint(): void {
    const frame = this.currentFrame;
    if (!frame) return;
    const canvas = this.el<HTMLCanvasElement>("heatmap");
    if (typeof canvas.getContext !== "function"
        || typeof OffscreenCanvas === "undefined") {
      return; // headless test environment: state is still fully observable
    }
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const image = new ImageData(frame.ncols, frame.nrows);
    image.data.set(rasterize(frame));
    const off = new OffscreenCanvas(frame.ncols, frame.nrows);
    const offCtx = off.getContext("2d")!;
    offCtx.putImageData(image, 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);

    const sx = canvas.width / frame.ncols;
    const sy = canvas.height / frame.nrows;
    if (this.state.bbox) {
      const b = this.state.bbox;
      ctx.strokeStyle = "#00e5ff";
      ctx.lineWidth = 2;
      ctx.strokeRect(b.c0 * sx, b.r0 * sy, (b.c1 - b.c0) * sx,
                     (b.r1 - b.r0) * sy);
    }
    if (this.state.route) {
      ctx.strokeStyle = "#00ff88";
      ctx.lineWidth = 3;
      ctx.beginPath();
      this.state.route.path.forEach(([r, c], i) => {
        const x = (c + 0.5) * sx;
        const y = (r + 0.5) * sy;
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    }
    for (const [cell, color] of [
      [this.state.origin, "#ffffff"],
      [this.state.destination, "#000000"],
    ] as const) {
      if (!cell) continue;
      ctx.fillStyle = color;
      ctx.beginPath();
      ctx.arc((cell[1] + 0.5) * sx, (cell[0] + 0.5) * sy, 5, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  private renderChrome(): void {
    const banner = this.el<HTMLElement>("error-banner");
    banner.textContent = this.state.error ?? "";
    banner.style.display = this.state.error ? "block" : "none";
    const badge = this.el<HTMLElement>("provenance-badge");
    badge.textContent = this.state.predictedBadge
      ? `predicted: ${this.state.predictedBadge}` : "";
    badge.style.display = this.state.predictedBadge ? "inline-block" : "none";
    this.el<HTMLElement>("hour-label").textContent =
      `hour ${this.state.hour + 1}/${this.state.nHours}`;
    const slider = this.el<HTMLInputElement>("hour-slider");
    slider.max = String(Math.max(0, this.state.nHours - 1));
    slider.value = String(this.state.hour);
    this.el<HTMLElement>("alpha-label").textContent =
      `alpha ${this.state.alpha.toFixed(2)}`;
  }

  private renderSummaryRow(): void {
    if (!this.summary) return;
    const row = this.summary.rows[this.state.hour];
    if (!row) return;
    const parts = Object.entries(row.proportions)
      .map(([label, p]) => `${label.replace("_", " ")} ${(100 * p).toFixed(0)}%`);
    this.el<HTMLElement>("summary-panel").textContent =
      `${row.time} — mean ${row.mean.toFixed(1)} / min ${row.min.toFixed(1)}` +
      ` / max ${row.max.toFixed(1)} degC — ${parts.join(", ")}`;
  }

  private renderRoutePanel(): void {
    const route = this.state.route;
    this.el<HTMLElement>("route-panel").textContent = route
      ? `route: ${route.lengthM.toFixed(1)} m, avg UTCI ` +
        `${route.avgUtci.toFixed(2)} degC (alpha ${route.alpha.toFixed(2)})`
      : "";
  }

  private renderLegend(): void {
    const legend = this.el<HTMLElement>("legend");
    legend.innerHTML = "";
    for (const band of STRESS_BANDS) {
      const item = this.root.createElement("span");
      item.className = "legend-item";
      const chip = this.root.createElement("span");
      chip.className = "legend-chip";
      chip.style.backgroundColor = `rgb(${band.color.join(",")})`;
      const bounds = band.lower === null ? `<= ${band.upper}`
        : band.upper === null ? `> ${band.lower}`
        : `${band.lower}-${band.upper}`;
      item.appendChild(chip);
      item.appendChild(this.root.createTextNode(
        ` ${band.label.replace("_", " ")} (${bounds} degC) `));
      legend.appendChild(item);
    }
  }
}

export function boot(baseUrl?: string): App {
  const base = baseUrl ??
    new URLSearchParams(window.location.search).get("api") ??
    "http://127.0.0.1:8765";
  const app = new App(new TwinApi(base), document);
  void app.start();
  return app;
}
