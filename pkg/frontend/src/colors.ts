/** Color ramp anchored to the UTCI stress bands. The band bounds are
 * mirrored from the service and cross-checked against /api/summary at
 * startup, so a legend drift fails loudly instead of lying. */

export interface Band {
  label: string;
  lower: number | null; // null = -inf
  upper: number | null; // null = +inf
  color: [number, number, number];
}

export const STRESS_BANDS: Band[] = [
  { label: "no", lower: null, upper: 26, color: [69, 117, 180] },
  { label: "moderate", lower: 26, upper: 32, color: [254, 224, 144] },
  { label: "strong", lower: 32, upper: 38, color: [252, 141, 89] },
  { label: "very_strong", lower: 38, upper: 46, color: [215, 48, 39] },
  { label: "extreme", lower: 46, upper: null, color: [127, 0, 0] },
];

export const MASKED_COLOR: [number, number, number] = [60, 60, 60];

export function bandFor(utci: number): Band {
  for (const band of STRESS_BANDS) {
    if (band.upper === null || utci <= band.upper) {
      return band;
    }
  }
  return STRESS_BANDS[STRESS_BANDS.length - 1];
}

/** Shade within the band by position, so gradients stay visible while the
 * hue still identifies the stress category. */
export function colorFor(utci: number): [number, number, number] {
  const band = bandFor(utci);
  const lo = band.lower ?? band.upper! - 8;
  const hi = band.upper ?? band.lower! + 8;
  const t = Math.max(0, Math.min(1, (utci - lo) / (hi - lo)));
  const scale = 0.78 + 0.22 * t;
  return [
    Math.round(band.color[0] * scale),
    Math.round(band.color[1] * scale),
    Math.round(band.color[2] * scale),
  ];
}

export interface ServedBand {
  label: string;
  lower: number | null;
  upper: number | null;
}

/** True when the served band bounds equal the ramp anchors. */
export function legendMatchesServer(served: ServedBand[]): boolean {
  if (served.length !== STRESS_BANDS.length) return false;
  return served.every((b, i) =>
    b.label === STRESS_BANDS[i].label &&
    b.lower === STRESS_BANDS[i].lower &&
    b.upper === STRESS_BANDS[i].upper);
}
