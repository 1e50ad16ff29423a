// Overlay behavior against payloads captured from the live service: the
// legend always lists the five spaces, a raised tau never deepens any
// pixel's assignment, and tau = 1 sends the whole toy image to W+.

import { describe, expect, it } from "vitest";
import {
  coverageSummary,
  cssColor,
  deepenedPixels,
  legendSpaces,
  overlayDataUrl,
} from "../src/overlay";
import type { InvertibilityPayload } from "../src/types";
import sweepJson from "./fixtures/invertibility_sweep.json";

const sweep = sweepJson as unknown as Record<string, InvertibilityPayload>;
const tauKeys = Object.keys(sweep).sort((a, b) => Number(a) - Number(b));

describe("overlay", () => {
  it("legend always shows exactly 5 spaces, in the served order", () => {
    for (const key of tauKeys) {
      const p = sweep[key]!;
      expect(p.legend).toHaveLength(5);
      expect(legendSpaces(p)).toEqual(p.order);
      expect(p.order[0]).toBe("w_plus");
    }
  });

  it("raising tau never moves a pixel to a deeper space", () => {
    for (let i = 1; i < tauKeys.length; i++) {
      const prev = sweep[tauKeys[i - 1]!]!;
      const next = sweep[tauKeys[i]!]!;
      expect(deepenedPixels(prev, next)).toEqual([]);
    }
  });

  it("tau = 1 tints the whole toy image W+", () => {
    const p = sweep["1.0"]!;
    expect(p.coverage.w_plus).toBe(1.0);
    for (const row of p.labels) {
      for (const v of row) expect(v).toBe(0);
    }
  });

  it("mismatched space orders are rejected rather than compared", () => {
    const a = sweep[tauKeys[0]!]!;
    const b = { ...a, order: [...a.order].reverse() };
    expect(() => deepenedPixels(a, b)).toThrow(/different space orders/);
  });

  it("renders served bytes and colors verbatim", () => {
    const p = sweep["0.25"]!;
    expect(overlayDataUrl(p)).toBe(`data:image/png;base64,${p.overlay_png_b64}`);
    expect(cssColor(p.legend[0]!.color)).toMatch(/^rgb\(\d+, \d+, \d+\)$/);
    expect(coverageSummary(p)).toContain("w_plus");
  });
});
