import { describe, expect, it } from "vitest";
import { STRESS_BANDS, bandFor, colorFor, legendMatchesServer } from "../src/colors.js";

describe("stress-band color ramp", () => {
  it("band boundaries are upper-inclusive", () => {
    expect(bandFor(25.0).label).toBe("no");
    expect(bandFor(26.0).label).toBe("no");
    expect(bandFor(26.1).label).toBe("moderate");
    expect(bandFor(38.0).label).toBe("strong");
    expect(bandFor(38.0001).label).toBe("very_strong");
    expect(bandFor(46.0).label).toBe("very_strong");
    expect(bandFor(47.3).label).toBe("extreme");
  });

  it("a constant 30 degC frame maps to one uniform moderate color", () => {
    const colors = new Set([30, 30, 30, 30].map(v => colorFor(v).join(",")));
    expect(colors.size).toBe(1);
    expect(bandFor(30).label).toBe("moderate");
  });

  it("legend cross-checks against the served band bounds", () => {
    const served = STRESS_BANDS.map(b => ({
      label: b.label, lower: b.lower, upper: b.upper,
    }));
    expect(legendMatchesServer(served)).toBe(true);
    const drifted = served.map(b =>
      b.label === "strong" ? { ...b, upper: 39 } : b);
    expect(legendMatchesServer(drifted)).toBe(false);
  });
});
