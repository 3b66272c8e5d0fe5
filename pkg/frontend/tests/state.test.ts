import { describe, expect, it } from "vitest";
import { initialState, transition, bboxTooSmall, MIN_FORECAST_SIZE } from "../src/state.js";

describe("view state transitions", () => {
  it("selecting a snapshot clamps the hour and clears stale routes", () => {
    let s = initialState();
    s = transition(s, { kind: "snapshot_selected", id: "simulated-0000", nHours: 72, predicted: false });
    s = transition(s, { kind: "hour_changed", hour: 70 });
    s = transition(s, { kind: "snapshot_selected", id: "predicted-0001", nHours: 24, predicted: true });
    expect(s.hour).toBe(23);
    expect(s.route).toBeNull();
    expect(s.predictedBadge).toBe("predicted-0001");
  });

  it("hour change is clamped to the snapshot range", () => {
    let s = initialState();
    s = transition(s, { kind: "snapshot_selected", id: "a", nHours: 10, predicted: false });
    s = transition(s, { kind: "hour_changed", hour: 99 });
    expect(s.hour).toBe(9);
    s = transition(s, { kind: "hour_changed", hour: -5 });
    expect(s.hour).toBe(0);
  });

  it("undersized bbox is rejected client-side with a message", () => {
    let s = initialState();
    s = transition(s, { kind: "bbox_selected", bbox: { r0: 0, c0: 0, r1: 30, c1: 30 } });
    expect(s.bbox).toBeNull();
    expect(s.error).toContain(`${MIN_FORECAST_SIZE}x${MIN_FORECAST_SIZE}`);
    expect(bboxTooSmall({ r0: 0, c0: 0, r1: 64, c1: 64 })).toBe(false);
  });

  it("forecast failure surfaces the error and leaves the view unchanged", () => {
    let s = initialState();
    s = transition(s, { kind: "snapshot_selected", id: "a", nHours: 24, predicted: false });
    const before = s;
    s = transition(s, { kind: "forecast_requested" });
    s = transition(s, { kind: "forecast_failed", message: "boom" });
    expect(s.error).toBe("boom");
    expect(s.snapshotId).toBe(before.snapshotId);
    expect(s.hour).toBe(before.hour);
    expect(s.forecastInFlight).toBe(false);
  });

  it("OD clicks set origin then destination, third click restarts", () => {
    let s = initialState();
    s = transition(s, { kind: "od_clicked", cell: [1, 2] });
    expect(s.origin).toEqual([1, 2]);
    expect(s.destination).toBeNull();
    s = transition(s, { kind: "od_clicked", cell: [5, 6] });
    expect(s.destination).toEqual([5, 6]);
    s = transition(s, { kind: "od_clicked", cell: [9, 9] });
    expect(s.origin).toEqual([9, 9]);
    expect(s.destination).toBeNull();
  });

  it("route failure keeps endpoints for retry", () => {
    let s = initialState();
    s = transition(s, { kind: "od_clicked", cell: [1, 2] });
    s = transition(s, { kind: "od_clicked", cell: [3, 4] });
    s = transition(s, { kind: "route_failed", message: "no route" });
    expect(s.origin).toEqual([1, 2]);
    expect(s.destination).toEqual([3, 4]);
    expect(s.error).toBe("no route");
  });

  it("transitions are pure (inputs untouched)", () => {
    const s0 = initialState();
    const frozen = Object.freeze({ ...s0 });
    transition(frozen as typeof s0, { kind: "hour_changed", hour: 3 });
    expect(frozen.hour).toBe(0);
  });
});
