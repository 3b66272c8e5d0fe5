/** Controller tests against a mocked API: every displayed number must come
 * from an intercepted response, and the fetch discipline (one heatmap
 * request per hour change) is observable on the wire. */

import { describe, expect, it } from "vitest";
import { App } from "../src/app.js";
import { TwinApi } from "../src/api.js";
import { STRESS_BANDS } from "../src/colors.js";
import { APP_ELEMENT_IDS, FakeDocument } from "./fake-dom.js";

interface Call {
  url: string;
  method: string;
  body?: unknown;
}

function makeWorld(opts: { nHours?: number; failForecast?: boolean } = {}) {
  const nHours = opts.nHours ?? 6;
  const calls: Call[] = [];
  const frame = (hour: number) => ({
    snapshot: "simulated-0000",
    t: `2022-07-01T0${hour}:00:00+00:00`,
    index: hour, nrows: 2, ncols: 2, min: 25, max: 41,
    values: [[30 + hour, null], [41, 25]],
  });
  const snapshots = {
    snapshots: [
      { id: "simulated-0000", kind: "simulated", created_at: "", n_frames: nHours,
        first: "", last: "", provenance: {} },
      { id: "predicted-0001", kind: "predicted", created_at: "", n_frames: 24,
        first: "", last: "", provenance: {} },
    ],
  };
  const summary = {
    snapshot: "simulated-0000",
    bands: STRESS_BANDS.map(b => ({ label: b.label, lower: b.lower, upper: b.upper })),
    rows: Array.from({ length: nHours }, (_, i) => ({
      time: `t${i}`, proportions: { no: 0.5, moderate: 0.5, strong: 0,
                                    very_strong: 0, extreme: 0 },
      mean: 28, min: 25, max: 41,
    })),
  };
  const routePayload = {
    path: [[0, 0], [1, 1]], length_m: 1.41, avg_utci: 27.5, alpha: 0.5,
  };

  const fetchImpl = async (url: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    calls.push({ url, method, body });
    const respond = (status: number, payload: unknown) => ({
      ok: status < 400, status,
      json: async () => payload,
    }) as Response;
    if (url.includes("/api/snapshots")) return respond(200, snapshots);
    if (url.includes("/api/summary")) return respond(200, summary);
    if (url.includes("/api/heatmap")) {
      const hour = Number(new URL(url, "http://x").searchParams.get("t"));
      return respond(200, frame(hour));
    }
    if (url.includes("/api/forecast")) {
      if (opts.failForecast) {
        return respond(500, { code: "forecast_failed", message: "cpu on fire" });
      }
      return respond(200, { id: "predicted-0001", seconds: 1.5, n_tiles: 1,
                            speed_ratio_vs_simulator: 2.0 });
    }
    if (url.includes("/api/route")) return respond(200, routePayload);
    return respond(404, { code: "not_found", message: url });
  };

  const doc = new FakeDocument(APP_ELEMENT_IDS);
  const app = new App(new TwinApi("http://twin", fetchImpl),
                      doc as unknown as Document);
  return { app, doc, calls, routePayload };
}

const heatmapCalls = (calls: Call[]) =>
  calls.filter(c => c.url.includes("/api/heatmap"));

describe("heatmap fetch discipline", () => {
  it("renders the first frame and issues exactly one fetch per hour change", async () => {
    const { app, calls } = makeWorld();
    await app.start();
    expect(heatmapCalls(calls).length).toBe(1);
    await app.showHour(1);
    expect(heatmapCalls(calls).length).toBe(2);
    await app.showHour(2);
    expect(heatmapCalls(calls).length).toBe(3);
    // revisiting a cached hour issues no new request
    await app.showHour(1);
    expect(heatmapCalls(calls).length).toBe(3);
    expect(app.state.hour).toBe(1);
  });

  it("legend bounds are cross-checked against the summary payload", async () => {
    const { app } = makeWorld();
    await app.start();
    expect(app.state.error).toBeNull(); // matching bands: no banner
  });
});

describe("region forecast", () => {
  it("valid bbox posts a forecast and shows the predicted badge", async () => {
    const { app, doc, calls } = makeWorld();
    await app.start();
    app.dispatch({ kind: "bbox_selected", bbox: { r0: 0, c0: 0, r1: 64, c1: 64 } });
    await app.requestForecast();
    const post = calls.find(c => c.url.includes("/api/forecast"));
    expect(post).toBeDefined();
    expect(post!.body).toMatchObject({ snapshot: "simulated-0000",
                                       bbox: [0, 0, 64, 64] });
    expect(app.state.predictedBadge).toBe("predicted-0001");
    expect(doc.element("provenance-badge").textContent)
      .toContain("predicted-0001");
  });

  it("undersized bbox never reaches the network", async () => {
    const { app, calls } = makeWorld();
    await app.start();
    app.dispatch({ kind: "bbox_selected", bbox: { r0: 0, c0: 0, r1: 30, c1: 30 } });
    expect(app.state.error).toContain("64x64");
    const before = calls.filter(c => c.url.includes("/api/forecast")).length;
    expect(before).toBe(0);
  });

  it("server failure surfaces an error banner and keeps the view", async () => {
    const { app, doc } = makeWorld({ failForecast: true });
    await app.start();
    const snapshotBefore = app.state.snapshotId;
    await app.requestForecast();
    expect(app.state.error).toContain("cpu on fire");
    expect(app.state.snapshotId).toBe(snapshotBefore);
    expect(doc.element("error-banner").textContent).toContain("cpu on fire");
  });
});

describe("route picking", () => {
  it("displays exactly the length and avg UTCI the API returned", async () => {
    const { app, doc, calls, routePayload } = makeWorld();
    await app.start();
    app.dispatch({ kind: "od_clicked", cell: [0, 0] });
    app.dispatch({ kind: "od_clicked", cell: [1, 1] });
    await app.requestRoute();
    const post = calls.find(c => c.url.includes("/api/route"));
    expect(post!.body).toMatchObject({ origin: [0, 0], destination: [1, 1],
                                       alpha: 0.5 });
    const panel = doc.element("route-panel").textContent;
    expect(panel).toContain(routePayload.length_m.toFixed(1));
    expect(panel).toContain(routePayload.avg_utci.toFixed(2));
    expect(app.state.route!.path).toEqual(routePayload.path);
  });

  it("alpha slider re-query posts the new alpha", async () => {
    const { app, calls } = makeWorld();
    await app.start();
    app.dispatch({ kind: "od_clicked", cell: [0, 0] });
    app.dispatch({ kind: "od_clicked", cell: [1, 1] });
    await app.requestRoute();
    app.dispatch({ kind: "alpha_changed", alpha: 1.0 });
    await app.requestRoute();
    const posts = calls.filter(c => c.url.includes("/api/route"));
    expect(posts.length).toBe(2);
    expect((posts[1].body as { alpha: number }).alpha).toBe(1.0);
  });
});
