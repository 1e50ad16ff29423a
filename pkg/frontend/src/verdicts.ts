// Direction control annotation. Capability flags come from the server's
// direction registry and visibility comes from the served coverage; the
// client never keeps its own capability table. A direction is usable only
// when every space visible in the current assignment survives it.

import type { DirectionInfo, EditVerdict } from "./types";

export interface DirectionAnnotation {
  name: string;
  enabled: boolean;
  failing: string[];
}

export function annotateDirections(
  directions: DirectionInfo[],
  coverage: Record<string, number>,
): DirectionAnnotation[] {
  return directions.map((d) => {
    const failing = Object.entries(coverage)
      .filter(([space, frac]) => frac > 0 && d.capability[space] === false)
      .map(([space]) => space);
    return { name: d.name, enabled: failing.length === 0, failing };
  });
}

// The server's own applicability verdict, reflected verbatim (used to
// refresh a control after an edit round-trip).
export function annotationFromVerdict(
  name: string,
  verdict: EditVerdict,
): DirectionAnnotation {
  return { name, enabled: verdict.applicable, failing: [...verdict.failing] };
}

export function annotationLabel(a: DirectionAnnotation): string {
  return a.enabled ? a.name : `${a.name} (blocked by ${a.failing.join(", ")})`;
}
