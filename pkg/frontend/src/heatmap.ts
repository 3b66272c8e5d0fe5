/** Pure raster helpers: grid -> RGBA pixels and hover lookups. The canvas
 * painting in app.ts is a thin blit of what these functions produce. */

import { bandFor, colorFor, MASKED_COLOR } from "./colors.js";
import type { HeatmapPayload } from "./api.js";

/** RGBA buffer (nrows*ncols*4) for a heatmap payload; masked cells get the
 * neutral color. */
export function rasterize(payload: HeatmapPayload): Uint8ClampedArray {
  const { nrows, ncols, values } = payload;
  const out = new Uint8ClampedArray(nrows * ncols * 4);
  let k = 0;
  for (let r = 0; r < nrows; r++) {
    const row = values[r];
    for (let c = 0; c < ncols; c++) {
      const v = row[c];
      const rgb = v === null ? MASKED_COLOR : colorFor(v);
      out[k] = rgb[0];
      out[k + 1] = rgb[1];
      out[k + 2] = rgb[2];
      out[k + 3] = 255;
      k += 4;
    }
  }
  return out;
}

export interface HoverInfo {
  row: number;
  col: number;
  utci: number | null;
  category: string | null;
}

export function hoverInfo(payload: HeatmapPayload, row: number,
                          col: number): HoverInfo | null {
  if (row < 0 || row >= payload.nrows || col < 0 || col >= payload.ncols) {
    return null;
  }
  const v = payload.values[row][col];
  return {
    row, col, utci: v,
    category: v === null ? null : bandFor(v).label,
  };
}

/** Map a mouse position on the canvas to a grid cell. */
export function cellAt(x: number, y: number, canvasW: number, canvasH: number,
                       nrows: number, ncols: number): [number, number] {
  const col = Math.max(0, Math.min(ncols - 1, Math.floor(x / (canvasW / ncols))));
  const row = Math.max(0, Math.min(nrows - 1, Math.floor(y / (canvasH / nrows))));
  return [row, col];
}

/** Small LRU for frames keyed by snapshot:hour. */
export class FrameCache {
  private map = new Map<string, HeatmapPayload>();

  constructor(private capacity = 48) {}

  get(snapshot: string, hour: number): HeatmapPayload | undefined {
    const key = `${snapshot}:${hour}`;
    const hit = this.map.get(key);
    if (hit !== undefined) {
      this.map.delete(key);
      this.map.set(key, hit); // refresh recency
    }
    return hit;
  }

  put(snapshot: string, hour: number, payload: HeatmapPayload): void {
    const key = `${snapshot}:${hour}`;
    this.map.delete(key);
    this.map.set(key, payload);
    while (this.map.size > this.capacity) {
      const oldest = this.map.keys().next().value as string;
      this.map.delete(oldest);
    }
  }

  get size(): number {
    return this.map.size;
  }
}
