/** View state and its pure transition function.
 *
 * Every user event and API response maps (previous state, event) -> next
 * state with no hidden effects, which is what makes the UI behavior
 * testable without a browser. */

export interface BBox {
  r0: number;
  c0: number;
  r1: number;
  c1: number;
}

export interface RouteDisplay {
  path: [number, number][];
  lengthM: number;
  avgUtci: number;
  alpha: number;
}

export interface ViewState {
  snapshotId: string | null;
  hour: number;
  nHours: number;
  colorDomain: [number, number];
  bbox: BBox | null;
  origin: [number, number] | null;
  destination: [number, number] | null;
  alpha: number;
  route: RouteDisplay | null;
  predictedBadge: string | null; // snapshot id shown with a provenance badge
  error: string | null;
  forecastInFlight: boolean;
}

export const MIN_FORECAST_SIZE = 64;

export function initialState(): ViewState {
  return {
    snapshotId: null, hour: 0, nHours: 0, colorDomain: [20, 50],
    bbox: null, origin: null, destination: null, alpha: 0.5, route: null,
    predictedBadge: null, error: null, forecastInFlight: false,
  };
}

export type ViewEvent =
  | { kind: "snapshot_selected"; id: string; nHours: number; predicted: boolean }
  | { kind: "hour_changed"; hour: number }
  | { kind: "frame_loaded"; min: number; max: number }
  | { kind: "bbox_selected"; bbox: BBox }
  | { kind: "bbox_cleared" }
  | { kind: "forecast_requested" }
  | { kind: "forecast_done"; id: string }
  | { kind: "forecast_failed"; message: string }
  | { kind: "od_clicked"; cell: [number, number] }
  | { kind: "alpha_changed"; alpha: number }
  | { kind: "route_loaded"; route: RouteDisplay }
  | { kind: "route_failed"; message: string }
  | { kind: "fetch_failed"; message: string }
  | { kind: "error_dismissed" };

export function bboxTooSmall(bbox: BBox): boolean {
  return (bbox.r1 - bbox.r0) < MIN_FORECAST_SIZE ||
         (bbox.c1 - bbox.c0) < MIN_FORECAST_SIZE;
}

export function transition(state: ViewState, event: ViewEvent): ViewState {
  switch (event.kind) {
    case "snapshot_selected":
      return {
        ...state, snapshotId: event.id, nHours: event.nHours,
        hour: Math.min(state.hour, Math.max(0, event.nHours - 1)),
        predictedBadge: event.predicted ? event.id : null,
        route: null, error: null,
      };
    case "hour_changed": {
      const hour = Math.max(0, Math.min(event.hour, state.nHours - 1));
      return { ...state, hour, route: null };
    }
    case "frame_loaded":
      return { ...state, colorDomain: [event.min, event.max], error: null };
    case "bbox_selected":
      if (bboxTooSmall(event.bbox)) {
        return {
          ...state, bbox: null,
          error: `forecast region must be at least ${MIN_FORECAST_SIZE}x` +
                 `${MIN_FORECAST_SIZE} cells`,
        };
      }
      return { ...state, bbox: event.bbox, error: null };
    case "bbox_cleared":
      return { ...state, bbox: null };
    case "forecast_requested":
      return { ...state, forecastInFlight: true, error: null };
    case "forecast_done":
      return { ...state, forecastInFlight: false, predictedBadge: event.id };
    case "forecast_failed":
      // surface the error, keep the current view untouched
      return { ...state, forecastInFlight: false, error: event.message };
    case "od_clicked":
      if (state.origin === null || state.destination !== null) {
        return { ...state, origin: event.cell, destination: null, route: null };
      }
      return { ...state, destination: event.cell };
    case "alpha_changed":
      return { ...state, alpha: event.alpha };
    case "route_loaded":
      return { ...state, route: event.route, error: null };
    case "route_failed":
      // keep endpoints so the user can retry with another alpha or hour
      return { ...state, route: null, error: event.message };
    case "fetch_failed":
      return { ...state, error: event.message };
    case "error_dismissed":
      return { ...state, error: null };
  }
}
