/** Typed client for the thermotwin HTTP API. All displayed numbers come
 * from these payloads; the UI itself never computes thermal quantities. */

export interface SnapshotInfo {
  id: string;
  kind: "simulated" | "predicted";
  created_at: string;
  n_frames: number;
  first: string;
  last: string;
  provenance: Record<string, unknown>;
}

export interface HeatmapPayload {
  snapshot: string;
  t: string;
  index: number;
  nrows: number;
  ncols: number;
  min: number;
  max: number;
  values: (number | null)[][];
}

export interface BandInfo {
  label: string;
  lower: number | null;
  upper: number | null;
}

export interface SummaryRow {
  time: string;
  proportions: Record<string, number>;
  mean: number;
  min: number;
  max: number;
}

export interface SummaryPayload {
  snapshot: string;
  bands: BandInfo[];
  rows: SummaryRow[];
}

export interface RoutePayload {
  path: [number, number][];
  length_m: number;
  avg_utci: number;
  alpha: number;
}

export interface ForecastResponse {
  id: string;
  seconds: number;
  n_tiles: number;
  speed_ratio_vs_simulator: number | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(public status: number, public body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class TwinApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body as ApiErrorBody);
    }
    return body as T;
  }

  listSnapshots(): Promise<{ snapshots: SnapshotInfo[] }> {
    return this.request("/api/snapshots");
  }

  heatmap(snapshot: string, hourIndex: number): Promise<HeatmapPayload> {
    return this.request(
      `/api/heatmap?snapshot=${encodeURIComponent(snapshot)}&t=${hourIndex}`,
    );
  }

  summary(snapshot: string): Promise<SummaryPayload> {
    return this.request(
      `/api/summary?snapshot=${encodeURIComponent(snapshot)}`,
    );
  }

  forecast(snapshot: string, bbox?: [number, number, number, number],
           t0?: string): Promise<ForecastResponse> {
    return this.request("/api/forecast", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ snapshot, bbox, t0 }),
    });
  }

  route(snapshot: string, t: number | string, origin: [number, number],
        destination: [number, number], alpha: number): Promise<RoutePayload> {
    return this.request("/api/route", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ snapshot, t, origin, destination, alpha }),
    });
  }
}
