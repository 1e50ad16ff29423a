// Session state for the single-page editing loop. Pure data and pure rules;
// every mutation of server-side objects happens through the HTTP API.

export type Phase = "idle" | "uploading" | "queued" | "running" | "done" | "failed";

export interface SessionState {
  imageDataUrl: string | null;
  jobId: string | null;
  bundleId: string | null;
  tau: number;
  direction: string | null;
  magnitude: number;
  overlayVisible: boolean;
  phase: Phase;
}

export const initialState: SessionState = {
  imageDataUrl: null,
  jobId: null,
  bundleId: null,
  tau: 0.25,
  direction: null,
  magnitude: 0,
  overlayVisible: true,
  phase: "idle",
};

export function clampTau(tau: number): number {
  if (Number.isNaN(tau)) return 0;
  return Math.min(1, Math.max(0, tau));
}

// Edit controls stay dead until an inversion job has fully landed.
export function editControlsEnabled(s: SessionState): boolean {
  return s.phase === "done" && s.bundleId !== null;
}
