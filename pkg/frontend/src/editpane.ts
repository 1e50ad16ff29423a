// Resolution of the edited result pane. Magnitude 0 is the zero-edit
// identity: the pane mirrors the inversion render itself, bit for bit,
// without a round-trip. Anything else goes to the server, which may refuse
// with a verdict instead of an image.

import type { EditResponse } from "./types";

export interface EditPaneResult {
  src: string | null;
  blocked: EditResponse | null;
  identicalToInversion: boolean;
}

export async function resolveEditPane(opts: {
  magnitude: number;
  inversionSrc: string;
  post: () => Promise<EditResponse>;
}): Promise<EditPaneResult> {
  if (opts.magnitude === 0) {
    return { src: opts.inversionSrc, blocked: null, identicalToInversion: true };
  }
  const resp = await opts.post();
  if (resp.image_png_b64 === null) {
    return { src: null, blocked: resp, identicalToInversion: false };
  }
  return {
    src: `data:image/png;base64,${resp.image_png_b64}`,
    blocked: null,
    identicalToInversion: false,
  };
}
