"""HTTP service: asynchronous inversion jobs, synchronous edits.

Inversions are minutes-long at full scale, so POST /v1/invert only queues a
job against a bounded worker pool and clients poll GET /v1/jobs/{id}.
Edits are forward passes, so POST /v1/bundles/{id}/edit renders inline.
Refined error maps are persisted with every bundle, which makes threshold
(tau) previews cheap recolors instead of new optimizations.

Endpoints (JSON bodies; images as base64 PNG):
    POST /v1/invert                         -> {job_id}            202
    GET  /v1/jobs/{id}                      -> job record
    GET  /v1/bundles/{id}/render            -> PNG bytes
    GET  /v1/bundles/{id}/invertibility?tau -> assignment snapshot
    GET  /v1/directions?dataset=            -> direction registry
    POST /v1/bundles/{id}/edit              -> render + verdicts

Environment: SAM_DATA_DIR (store root), SAM_WORKERS (pool size), SAM_PORT.
"""

from __future__ import annotations

import base64
import os
import queue
import secrets
import threading
import warnings
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response

from .config import LossWeights, OptimizationConfig
from .editing import (apply_edit, builtin_directions, bundle_spaces,
                      check_applicability, load_directions)
from .errors import SamError, UsageError
from .generator import load_generator
from .imgio import decode_png, encode_png, encode_png_u8, resize_image
from .inversion import form_image
from .invertibility import (DEFAULT_TAU, assignment_to_rgb, select_assignment,
                            SPACE_COLORS)
from .pipeline import sam_invert
from .store import BundleStore

_STATES = ("queued", "running", "done", "failed")


class JobRecord:
    """Forward-only job state machine; safe under the registry lock."""

    def __init__(self, job_id: str):
        self.id = job_id
        self.state = "queued"
        self.progress = 0.0
        self.bundle_id = None
        self.error = None

    def advance(self, state: str, **fields):
        if _STATES.index(state) < _STATES.index(self.state):
            raise RuntimeError(f"job {self.id}: cannot move {self.state} -> {state}")
        self.state = state
        for k, v in fields.items():
            setattr(self, k, v)

    def to_json(self) -> dict:
        return {"id": self.id, "state": self.state, "progress": round(self.progress, 4),
                "bundle_id": self.bundle_id, "error": self.error}


def _b64_png(image: np.ndarray) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def make_app(data_dir=None, generator: str = "toy", seed: int = 0,
             workers: int | None = None, queue_size: int | None = None,
             frontend_dist=None) -> FastAPI:
    """Build the service app; everything is injected so tests can run it inline."""
    data_dir = Path(data_dir or os.environ.get("SAM_DATA_DIR", "./sam-data"))
    workers = workers if workers is not None else int(os.environ.get("SAM_WORKERS", "1"))
    queue_size = queue_size or max(4, workers * 4)

    h = load_generator(generator, seed=seed)
    store = BundleStore(data_dir / "bundles")
    jobs: dict = {}
    jobs_lock = threading.Lock()
    job_queue: queue.Queue = queue.Queue(maxsize=queue_size)

    directions_root = data_dir / "directions"
    registry_cache: dict = {}

    def _registry(dataset: str) -> dict:
        if dataset not in registry_cache:
            reg = builtin_directions(h, dataset)
            disk = directions_root / dataset
            if disk.is_dir() and any(disk.glob("*.samb")):
                reg.update(load_directions(disk))
            registry_cache[dataset] = reg
        return registry_cache[dataset]

    def _worker():
        while True:
            item = job_queue.get()
            if item is None:
                return
            job, payload = item
            try:
                with jobs_lock:
                    job.advance("running")
                image = decode_png(base64.b64decode(payload["image"]))
                if image.shape[1:] != (h.output_resolution, h.output_resolution):
                    image = resize_image(image, h.output_resolution)
                cfg = OptimizationConfig(
                    steps=int(payload.get("steps", 300)),
                    weights=LossWeights(), perceptual="tiny")
                probe_cfg = OptimizationConfig(
                    steps=int(payload.get("probe_steps", cfg.steps)), perceptual="tiny")
                tau = float(payload.get("tau", DEFAULT_TAU))

                def _progress(done, total):
                    with jobs_lock:
                        job.progress = min(1.0, done / max(total, 1))

                sam = sam_invert(h, image, tau=tau, cfg=cfg, probe_cfg=probe_cfg,
                                 progress=_progress)
                bundle_id = store.save(sam.bundle, refined=sam.refined,
                                       labels=sam.labels, tau=tau)
                with jobs_lock:
                    job.advance("done", progress=1.0, bundle_id=bundle_id)
            except Exception as exc:      # job isolation: nothing propagates
                with jobs_lock:
                    if job.state != "failed":
                        job.advance("failed", error=f"{type(exc).__name__}: {exc}")
            finally:
                job_queue.task_done()

    threads = [threading.Thread(target=_worker, daemon=True, name=f"invert-{i}")
               for i in range(workers)]
    for t in threads:
        t.start()

    app = FastAPI(title="spatially adaptive inversion service")
    app.state.store = store
    app.state.generator = h

    @app.exception_handler(SamError)
    async def _sam_error(request: Request, exc: SamError):
        code = 400 if isinstance(exc, UsageError) else 500
        return JSONResponse(status_code=code, content={"error": str(exc)})

    @app.post("/v1/invert", status_code=202)
    async def submit_invert(payload: dict):
        if "image" not in payload:
            return JSONResponse(status_code=400,
                                content={"error": "missing 'image' (base64 PNG)"})
        job = JobRecord(secrets.token_hex(6))
        try:
            job_queue.put_nowait((job, payload))
        except queue.Full:
            return JSONResponse(status_code=429, content={
                "error": "inversion queue is full",
                "retry_after_s": 5,
            }, headers={"Retry-After": "5"})
        with jobs_lock:
            jobs[job.id] = job
        return {"job_id": job.id}

    @app.get("/v1/jobs/{job_id}")
    async def job_status(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                return JSONResponse(status_code=404,
                                    content={"error": f"unknown job {job_id!r}"})
            return job.to_json()

    @app.get("/v1/bundles/{bundle_id}/render")
    async def render_bundle(bundle_id: str):
        if not store.exists(bundle_id):
            return JSONResponse(status_code=404,
                                content={"error": f"unknown bundle {bundle_id!r}"})
        stored = store.load(bundle_id)
        png = encode_png(form_image(h, stored.bundle))
        return Response(content=png, media_type="image/png")

    def _assignment_payload(stored, tau: float) -> dict:
        order = [h.native_space] + list(h.feature_spaces)
        assignment = select_assignment(stored.refined, tau, order=order)
        overlay = assignment_to_rgb(assignment)
        return {
            "tau": tau,
            "order": [s.value for s in assignment.order],
            "legend": [{"space": s.value, "color": list(SPACE_COLORS[s])}
                       for s in assignment.order],
            "coverage": {s.value: c for s, c in assignment.coverage().items()},
            "labels": assignment.labels.tolist(),
            "overlay_png_b64": base64.b64encode(
                encode_png_u8(overlay)).decode("ascii"),
        }

    @app.get("/v1/bundles/{bundle_id}/invertibility")
    async def invertibility(bundle_id: str, tau: float | None = Query(default=None)):
        if not store.exists(bundle_id):
            return JSONResponse(status_code=404,
                                content={"error": f"unknown bundle {bundle_id!r}"})
        stored = store.load(bundle_id)
        if not stored.refined:
            return JSONResponse(status_code=404, content={
                "error": f"bundle {bundle_id!r} has no cached error maps"})
        return _assignment_payload(stored, stored.tau if tau is None else float(tau))

    @app.get("/v1/directions")
    async def directions(dataset: str = Query(default="toy")):
        try:
            reg = _registry(dataset)
        except UsageError as exc:
            return JSONResponse(status_code=404, content={"error": str(exc)})
        return {"dataset": dataset, "directions": [
            {"name": d.name, "dataset": d.dataset,
             "capability": {s.value: bool(v) for s, v in d.capability.items()}}
            for d in reg.values()]}

    @app.post("/v1/bundles/{bundle_id}/edit")
    async def edit_bundle(bundle_id: str, payload: dict):
        if not store.exists(bundle_id):
            return JSONResponse(status_code=404,
                                content={"error": f"unknown bundle {bundle_id!r}"})
        stored = store.load(bundle_id)

        tau_override = payload.get("tau_override")
        if tau_override is not None:
            # threshold previews recolor the cached assignment; applying a
            # new threshold for real requires re-optimization
            preview = _assignment_payload(stored, float(tau_override))
            return {"requires_reinversion": True, "preview": preview}

        name = payload.get("direction")
        dataset = payload.get("dataset", "toy")
        try:
            reg = _registry(dataset)
        except UsageError as exc:
            return JSONResponse(status_code=404, content={"error": str(exc)})
        if name not in reg:
            return JSONResponse(status_code=404, content={
                "error": f"unknown direction {name!r} in dataset {dataset!r}"})
        direction = reg[name]
        magnitude = float(payload.get("magnitude", 0.0))
        force = bool(payload.get("force", False))

        verdict = check_applicability(direction, bundle_spaces(stored.bundle))
        body = {"direction": name, "magnitude": magnitude,
                "verdict": verdict.to_json(), "applicable": verdict.applicable}
        # magnitude 0 is an identity render, never blocked by the verdict
        if magnitude != 0.0 and not verdict.applicable and not force:
            body["image_png_b64"] = None
            return body
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            edited = apply_edit(h, stored.bundle, direction, magnitude, force=force)
        body["image_png_b64"] = _b64_png(edited)
        return body

    if frontend_dist and Path(frontend_dist).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(frontend_dist), html=True),
                  name="frontend")

    def _shutdown():
        for _ in threads:
            try:
                job_queue.put_nowait(None)
            except queue.Full:
                pass

    app.state.shutdown_workers = _shutdown
    return app


def run_service(host: str = "127.0.0.1", port: int | None = None, **kwargs) -> None:
    import uvicorn

    port = port or int(os.environ.get("SAM_PORT", "8000"))
    app = make_app(**kwargs)
    uvicorn.run(app, host=host, port=port, log_level="warning")
