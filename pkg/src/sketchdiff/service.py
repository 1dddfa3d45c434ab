"""HTTP synthesis service.

Sampling takes seconds-to-minutes, so the API is asynchronous: POST a sketch
to ``/api/jobs`` (202 + job id), then poll ``GET /api/jobs/{id}`` until the
record turns ``done`` (base64 PNG result) or ``failed``.  A single worker
thread consumes jobs strictly in arrival order, so at most one sampling run
executes at a time no matter how many clients connect.

Completed results are kept in a bounded LRU cache keyed by
(request hash, checkpoint hash): repeating an identical request with the
same seed returns the cached image and flags the job ``cache_hit``.

Endpoints:

    POST /api/jobs       enqueue a synthesis request   (202 / 422 / 503)
    GET  /api/jobs/{id}  poll job state                (200 / 404)
    GET  /healthz        model identity + queue depth  (200)
    GET  /api/config     canvas size, region layout, sampler options (200)
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import logging
import os
import queue
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .data import image_png_bytes, sketch_from_png_bytes
from .pipeline import SAMPLERS, SynthesisPipeline
from .regions import REGION_NAMES

logger = logging.getLogger(__name__)

TERMINAL_STATES = ("done", "failed")


class SynthesisRequest(BaseModel):
    sketch_png: str  # base64-encoded grayscale PNG at the model's canvas size
    steps: int | None = None
    sampler: str = "ddim"
    seed: int | None = None
    masked_regions: list[str] = []


@dataclass
class Job:
    id: str
    request_hash: str
    sketch: object
    steps: int | None
    sampler: str
    seed: int
    masked_regions: tuple[str, ...]
    state: str = "queued"
    result_b64: str | None = None
    error: str | None = None
    cache_hit: bool = False
    queued_at: float = field(default_factory=time.time)
    started_at: float | None = None
    finished_at: float | None = None

    def record(self) -> dict:
        return {
            "id": self.id,
            "state": self.state,
            "request_hash": self.request_hash,
            "sampler": self.sampler,
            "seed": self.seed,
            "masked_regions": list(self.masked_regions),
            "steps": self.steps,
            "result": self.result_b64,
            "error": self.error,
            "cache_hit": self.cache_hit,
            "timings": {
                "queued_at": self.queued_at,
                "started_at": self.started_at,
                "finished_at": self.finished_at,
            },
        }


class JobStore:
    """Jobs plus the bounded result cache, guarded by one lock."""

    def __init__(self, cache_size: int):
        self.lock = threading.Lock()
        self.jobs: dict[str, Job] = {}
        self.cache: OrderedDict[tuple[str, str], str] = OrderedDict()
        self.cache_size = cache_size

    def add(self, job: Job) -> None:
        with self.lock:
            self.jobs[job.id] = job

    def get(self, job_id: str) -> Job | None:
        with self.lock:
            return self.jobs.get(job_id)

    def pending_count(self) -> int:
        with self.lock:
            return sum(1 for j in self.jobs.values() if j.state not in TERMINAL_STATES)

    def cache_lookup(self, key: tuple[str, str]) -> str | None:
        with self.lock:
            if key in self.cache:
                self.cache.move_to_end(key)
                return self.cache[key]
            return None

    def cache_store(self, key: tuple[str, str], result_b64: str) -> None:
        with self.lock:
            self.cache[key] = result_b64
            self.cache.move_to_end(key)
            while len(self.cache) > self.cache_size:
                self.cache.popitem(last=False)


def request_hash(req: SynthesisRequest, seed: int) -> str:
    canon = json.dumps(
        {
            "sketch_png": req.sketch_png,
            "steps": req.steps,
            "sampler": req.sampler,
            "seed": seed,
            "masked_regions": sorted(req.masked_regions),
        },
        sort_keys=True,
    )
    return hashlib.sha256(canon.encode()).hexdigest()


def create_app(
    checkpoint_path: str | Path | None = None,
    pipeline: SynthesisPipeline | None = None,
    max_steps: int = 1000,
    queue_len: int = 32,
    cache_size: int = 64,
) -> FastAPI:
    """Build the service; pass a checkpoint path, a pipeline, or neither.

    With no model the read endpoints still work and job submission answers
    503, so orchestration can probe a warming instance.
    """
    if pipeline is None and checkpoint_path is not None:
        pipeline = SynthesisPipeline.from_file(checkpoint_path)

    app = FastAPI(title="sketchdiff synthesis service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = JobStore(cache_size)
    work: queue.Queue[Job] = queue.Queue(maxsize=queue_len)
    app.state.store = store
    app.state.pipeline = pipeline

    def worker() -> None:
        while True:
            job = work.get()
            job.state = "running"
            job.started_at = time.time()
            try:
                image = pipeline.synthesize(
                    job.sketch,
                    steps=job.steps,
                    sampler=job.sampler,
                    seed=job.seed,
                    masked_regions=job.masked_regions,
                )
                job.result_b64 = base64.b64encode(image_png_bytes(image)).decode()
                job.state = "done"
                store.cache_store(
                    (job.request_hash, pipeline.checkpoint_hash), job.result_b64
                )
            except Exception as exc:  # worker must survive any job failure
                logger.warning("job %s failed: %s", job.id, exc)
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "failed"
            finally:
                job.finished_at = time.time()
                work.task_done()

    threading.Thread(target=worker, daemon=True, name="sampler-worker").start()

    def decode_sketch(req: SynthesisRequest):
        try:
            raw = base64.b64decode(req.sketch_png, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise HTTPException(422, f"sketch_png is not valid base64: {exc}") from exc
        try:
            sketch = sketch_from_png_bytes(raw)
        except Exception as exc:
            raise HTTPException(422, f"sketch_png does not decode as an image: {exc}") from exc
        canvas = pipeline.canvas
        if sketch.shape != (1, canvas, canvas):
            raise HTTPException(
                422,
                f"sketch is {sketch.shape[-1]}x{sketch.shape[-2]}, "
                f"expected {canvas}x{canvas}",
            )
        return sketch

    @app.post("/api/jobs", status_code=202)
    def submit(req: SynthesisRequest) -> dict:
        if pipeline is None:
            raise HTTPException(503, "no model loaded")
        if req.sampler not in SAMPLERS:
            raise HTTPException(422, f"sampler must be one of {SAMPLERS}")
        limit = min(max_steps, pipeline.schedule.T)
        if req.steps is not None and not 1 <= req.steps <= limit:
            raise HTTPException(422, f"steps must lie in [1, {limit}]")
        unknown = set(req.masked_regions) - set(REGION_NAMES)
        if unknown:
            raise HTTPException(422, f"unknown regions: {sorted(unknown)}")
        sketch = decode_sketch(req)

        seed = req.seed
        if seed is None:
            seed = int.from_bytes(os.urandom(4), "little")
            logger.info("request without seed; picked %d", seed)
        rhash = request_hash(req, seed)
        job = Job(
            id=uuid.uuid4().hex,
            request_hash=rhash,
            sketch=sketch,
            steps=req.steps,
            sampler=req.sampler,
            seed=seed,
            masked_regions=tuple(req.masked_regions),
        )

        cached = store.cache_lookup((rhash, pipeline.checkpoint_hash))
        if cached is not None:
            job.state = "done"
            job.cache_hit = True
            job.result_b64 = cached
            job.finished_at = time.time()
            store.add(job)
            return {"id": job.id, "state": job.state, "cache_hit": True}

        store.add(job)
        try:
            work.put_nowait(job)
        except queue.Full:
            job.state = "failed"
            job.error = "queue full"
            raise HTTPException(503, "job queue is full") from None
        return {"id": job.id, "state": job.state, "cache_hit": False}

    @app.get("/api/jobs/{job_id}")
    def poll(job_id: str) -> dict:
        job = store.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job id {job_id}")
        return job.record()

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "status": "ok",
            "model": pipeline.checkpoint_hash if pipeline is not None else None,
            "queue_depth": store.pending_count(),
        }

    @app.get("/api/config")
    def config() -> dict:
        if pipeline is None:
            return {"model": None}
        return {
            "model": pipeline.checkpoint_hash,
            "canvas": pipeline.canvas,
            "regions": list(REGION_NAMES),
            "layout": pipeline.layout.to_dict(),
            "samplers": list(SAMPLERS),
            "max_steps": min(max_steps, pipeline.schedule.T),
            "default_steps": min(50, pipeline.schedule.T),
        }

    return app
