// Invertibility overlay helpers. The server owns the palette and the
// assignment; the client only renders what it is sent and can check that a
// threshold change never moved a segment toward a deeper space.

import type { InvertibilityPayload } from "./types";

export function overlayDataUrl(p: InvertibilityPayload): string {
  return `data:image/png;base64,${p.overlay_png_b64}`;
}

export function legendSpaces(p: InvertibilityPayload): string[] {
  return p.legend.map((e) => e.space);
}

export function cssColor(rgb: [number, number, number]): string {
  return `rgb(${rgb[0]}, ${rgb[1]}, ${rgb[2]})`;
}

export function coverageSummary(p: InvertibilityPayload): string {
  return p.order
    .map((s) => [s, p.coverage[s] ?? 0] as const)
    .filter(([, c]) => c > 0)
    .map(([s, c]) => `${s} ${(c * 100).toFixed(0)}%`)
    .join("  ");
}

// Returns the pixels whose assigned space got deeper (a larger index into
// the editability order) between two payloads. A raised tau must return [].
export function deepenedPixels(
  prev: InvertibilityPayload,
  next: InvertibilityPayload,
): Array<{ y: number; x: number; from: number; to: number }> {
  if (prev.order.join() !== next.order.join()) {
    throw new Error("payloads use different space orders");
  }
  const out: Array<{ y: number; x: number; from: number; to: number }> = [];
  for (let y = 0; y < next.labels.length; y++) {
    const prow = prev.labels[y] ?? [];
    const nrow = next.labels[y] ?? [];
    for (let x = 0; x < nrow.length; x++) {
      const from = prow[x] ?? 0;
      const to = nrow[x] ?? 0;
      if (to > from) out.push({ y, x, from, to });
    }
  }
  return out;
}
