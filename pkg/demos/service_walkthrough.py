"""Drive the HTTP service end to end, in process.

Builds the FastAPI app with a temp data dir and exercises the whole client
flow the way a frontend would: submit an inversion job, poll it, fetch the
render and the invertibility overlay at two thresholds, list directions,
request an edit (plus the magnitude-0 identity check), and preview a
different tau. Run `saminv serve` to get the same thing on a real port.
"""

import base64
import tempfile
import time

from fastapi.testclient import TestClient

import saminv
from saminv.imgio import encode_png
from saminv.service import make_app

STEPS = 120
PROBE_STEPS = 80


def main():
    h = saminv.load_generator("toy", seed=0)
    target, _ = saminv.patched_target(h, seed=9)

    with tempfile.TemporaryDirectory() as tmp:
        app = make_app(data_dir=tmp, workers=1)
        client = TestClient(app)

        payload = {"image": base64.b64encode(encode_png(target)).decode("ascii"),
                   "steps": STEPS, "probe_steps": PROBE_STEPS}
        job_id = client.post("/v1/invert", json=payload).json()["job_id"]
        print(f"submitted job {job_id}")

        while True:
            rec = client.get(f"/v1/jobs/{job_id}").json()
            print(f"  state={rec['state']} progress={rec['progress']:.0%}")
            if rec["state"] in ("done", "failed"):
                break
            time.sleep(1.0)
        assert rec["state"] == "done", rec["error"]
        bundle_id = rec["bundle_id"]

        png = client.get(f"/v1/bundles/{bundle_id}/render").content
        print(f"render: {len(png)} PNG bytes")

        for tau in (0.25, 0.6):
            snap = client.get(f"/v1/bundles/{bundle_id}/invertibility",
                              params={"tau": tau}).json()
            cov = "  ".join(f"{k} {v:.0%}" for k, v in snap["coverage"].items()
                            if v > 0)
            print(f"assignment at tau={tau}: {cov}")

        names = [d["name"] for d in client.get("/v1/directions").json()["directions"]]
        print(f"directions: {names}")

        edit = client.post(f"/v1/bundles/{bundle_id}/edit",
                           json={"direction": names[0], "magnitude": 0.0}).json()
        same = base64.b64decode(edit["image_png_b64"]) == png
        print(f"magnitude-0 edit identical to render: {same}")

        edit = client.post(f"/v1/bundles/{bundle_id}/edit",
                           json={"direction": names[0], "magnitude": 1.5,
                                 "force": True}).json()
        print(f"magnitude-1.5 edit applicable={edit['applicable']} "
              f"(render attached: {edit['image_png_b64'] is not None})")

        preview = client.post(f"/v1/bundles/{bundle_id}/edit",
                              json={"tau_override": 0.6}).json()
        print(f"tau preview: requires_reinversion={preview['requires_reinversion']}")

        app.state.shutdown_workers()


if __name__ == "__main__":
    main()
