// Wire types, mirroring the service's JSON exactly.

export interface JobStatus {
  id: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  bundle_id: string | null;
  error: string | null;
}

export interface LegendEntry {
  space: string;
  color: [number, number, number];
}

export interface InvertibilityPayload {
  tau: number;
  order: string[];
  legend: LegendEntry[];
  coverage: Record<string, number>;
  labels: number[][];
  overlay_png_b64: string;
}

export interface DirectionInfo {
  name: string;
  dataset: string;
  capability: Record<string, boolean>;
}

export interface DirectionsPayload {
  dataset: string;
  directions: DirectionInfo[];
}

export interface EditVerdict {
  per_space: Record<string, boolean>;
  failing: string[];
  applicable: boolean;
  coverage: Record<string, number>;
}

export interface EditResponse {
  direction: string;
  magnitude: number;
  verdict: EditVerdict;
  applicable: boolean;
  image_png_b64: string | null;
}

export interface TauPreviewResponse {
  requires_reinversion: boolean;
  preview: InvertibilityPayload;
}
