// Thin typed client for the inversion service. Polling never ticks faster
// than once per second, and the two render-producing request lanes (overlay
// fetches, edit renders) are each limited to one in-flight request with
// latest-wins coalescing.

import type {
  DirectionsPayload,
  EditResponse,
  InvertibilityPayload,
  JobStatus,
  TauPreviewResponse,
} from "./types";

export const POLL_INTERVAL_MS = 1000;

async function jsonOrThrow<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // non-JSON error body; keep the status code
    }
    throw new Error(detail);
  }
  return (await resp.json()) as T;
}

export async function submitInvert(
  imageB64: string,
  tau: number,
  steps?: number,
): Promise<string> {
  const body: Record<string, unknown> = { image: imageB64, tau };
  if (steps !== undefined) body.steps = steps;
  const resp = await fetch("/v1/invert", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  const data = await jsonOrThrow<{ job_id: string }>(resp);
  return data.job_id;
}

export async function jobStatus(jobId: string): Promise<JobStatus> {
  return jsonOrThrow<JobStatus>(await fetch(`/v1/jobs/${jobId}`));
}

// Polls until the job leaves the queue/running states. `sleep` is
// injectable for tests; the default honors POLL_INTERVAL_MS.
export async function pollJob(
  jobId: string,
  onTick?: (s: JobStatus) => void,
  sleep: (ms: number) => Promise<void> = (ms) =>
    new Promise((r) => setTimeout(r, Math.max(ms, POLL_INTERVAL_MS))),
): Promise<JobStatus> {
  for (;;) {
    const status = await jobStatus(jobId);
    onTick?.(status);
    if (status.state === "done" || status.state === "failed") return status;
    await sleep(POLL_INTERVAL_MS);
  }
}

export function renderUrl(bundleId: string): string {
  return `/v1/bundles/${bundleId}/render`;
}

export async function fetchInvertibility(
  bundleId: string,
  tau?: number,
): Promise<InvertibilityPayload> {
  const q = tau === undefined ? "" : `?tau=${tau}`;
  return jsonOrThrow<InvertibilityPayload>(
    await fetch(`/v1/bundles/${bundleId}/invertibility${q}`),
  );
}

export async function fetchDirections(dataset: string): Promise<DirectionsPayload> {
  return jsonOrThrow<DirectionsPayload>(
    await fetch(`/v1/directions?dataset=${encodeURIComponent(dataset)}`),
  );
}

export async function postEdit(
  bundleId: string,
  body: { direction: string; dataset: string; magnitude: number; force?: boolean },
): Promise<EditResponse> {
  const resp = await fetch(`/v1/bundles/${bundleId}/edit`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  return jsonOrThrow<EditResponse>(resp);
}

export async function postTauPreview(
  bundleId: string,
  tau: number,
): Promise<TauPreviewResponse> {
  const resp = await fetch(`/v1/bundles/${bundleId}/edit`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ tau_override: tau }),
  });
  return jsonOrThrow<TauPreviewResponse>(resp);
}

// One in-flight task per lane; a task submitted while busy replaces any
// waiting task and runs when the current one settles (latest wins). The
// returned promise covers only the caller's own task; a chained successor
// runs on its own and is expected to handle its own failures.
export class RequestLane {
  private busy = false;
  private pending: (() => Promise<void>) | null = null;

  get inFlight(): boolean {
    return this.busy;
  }

  async run(task: () => Promise<void>): Promise<void> {
    if (this.busy) {
      this.pending = task;
      return;
    }
    this.busy = true;
    try {
      await task();
    } finally {
      this.busy = false;
      const next = this.pending;
      this.pending = null;
      if (next) void this.run(next).catch(() => undefined);
    }
  }
}
