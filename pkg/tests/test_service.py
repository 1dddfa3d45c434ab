"""HTTP service: job lifecycle, validation, caching, worker resilience."""

import base64
import io
import time

import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from sketchdiff.data import image_png_bytes, load_sketch_png, split_records
from sketchdiff.pipeline import SynthesisPipeline
from sketchdiff.service import create_app

POLL_TIMEOUT = 60.0


def wait_done(client, job_id):
    deadline = time.time() + POLL_TIMEOUT
    while time.time() < deadline:
        record = client.get(f"/api/jobs/{job_id}").json()
        if record["state"] in ("done", "failed"):
            return record
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not finish")


def sketch_b64(sketch: torch.Tensor) -> str:
    """Encode a (1, C, C) ink bitmap the way a client uploads it."""
    arr = ((1.0 - sketch[0].clamp(0, 1)) * 255.0).round().to(torch.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr.numpy(), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


@pytest.fixture(scope="module")
def pipeline(trained_toy):
    return SynthesisPipeline(trained_toy["stage2"])


@pytest.fixture(scope="module")
def client(pipeline):
    app = create_app(pipeline=pipeline, max_steps=20, cache_size=2)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def sketch(trained_toy):
    rec = split_records(trained_toy["manifest"], "test")[0]
    return load_sketch_png(trained_toy["dir"] / rec["sketches"]["mid"])


def submit(client, sketch, **overrides):
    body = {"sketch_png": sketch_b64(sketch), "steps": 5, "sampler": "ddim", "seed": 1}
    body.update(overrides)
    return client.post("/api/jobs", json=body)


class TestJobLifecycle:
    def test_submit_poll_done(self, client, sketch, pipeline):
        resp = submit(client, sketch, seed=101)
        assert resp.status_code == 202
        body = resp.json()
        assert body["state"] in ("queued", "running")
        record = wait_done(client, body["id"])
        assert record["state"] == "done"
        assert record["sampler"] == "ddim" and record["seed"] == 101
        png = base64.b64decode(record["result"])
        with Image.open(io.BytesIO(png)) as im:
            assert im.size == (pipeline.canvas, pipeline.canvas)
            assert im.mode == "RGB"
        t = record["timings"]
        assert t["queued_at"] <= t["started_at"] <= t["finished_at"]

    def test_result_matches_direct_synthesis(self, client, sketch, pipeline):
        record = wait_done(client, submit(client, sketch, seed=7).json()["id"])
        direct = pipeline.synthesize(sketch, steps=5, sampler="ddim", seed=7)
        assert base64.b64decode(record["result"]) == image_png_bytes(direct)

    def test_unknown_job_404(self, client):
        resp = client.get("/api/jobs/deadbeef")
        assert resp.status_code == 404

    def test_seedless_request_records_chosen_seed(self, client, sketch):
        record = wait_done(client, submit(client, sketch, seed=None).json()["id"])
        assert record["state"] == "done"
        assert isinstance(record["seed"], int)

class TestValidation:
    def test_bad_base64(self, client):
        resp = client.post(
            "/api/jobs",
            json={"sketch_png": "!!!not-base64!!!", "sampler": "ddim"},
        )
        assert resp.status_code == 422
        assert "base64" in resp.json()["detail"]

    def test_not_a_png(self, client):
        b64 = base64.b64encode(b"plain text, no image").decode()
        resp = client.post("/api/jobs", json={"sketch_png": b64})
        assert resp.status_code == 422
        assert "decode" in resp.json()["detail"]

    def test_wrong_size_diagnostic(self, client, pipeline):
        resp = submit(client, torch.zeros(1, 16, 16))
        assert resp.status_code == 422
        detail = resp.json()["detail"]
        assert "16x16" in detail and f"{pipeline.canvas}x{pipeline.canvas}" in detail

    def test_steps_out_of_bounds(self, client, sketch):
        assert submit(client, sketch, steps=0).status_code == 422
        resp = submit(client, sketch, steps=21)  # max_steps=20
        assert resp.status_code == 422
        assert "[1, 20]" in resp.json()["detail"]

    def test_unknown_sampler_and_region(self, client, sketch):
        assert submit(client, sketch, sampler="euler").status_code == 422
        resp = submit(client, sketch, masked_regions=["chin"])
        assert resp.status_code == 422
        assert "chin" in resp.json()["detail"]

    def test_missing_body_fields(self, client):
        assert client.post("/api/jobs", json={}).status_code == 422


class TestNoModel:
    def test_healthz_null_model_and_jobs_503(self):
        with TestClient(create_app()) as c:
            health = c.get("/healthz")
            assert health.status_code == 200
            assert health.json()["model"] is None
            resp = c.post("/api/jobs", json={"sketch_png": "aGk="})
            assert resp.status_code == 503
            assert c.get("/api/config").json() == {"model": None}


class TestHealthAndConfig:
    def test_healthz_reports_model_and_depth(self, client, pipeline):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["model"] == pipeline.checkpoint_hash
        assert body["queue_depth"] >= 0

    def test_queue_depth_increments_while_pending(self, pipeline, sketch):
        gate = {"release": False}

        class Slow:
            checkpoint_hash = pipeline.checkpoint_hash
            canvas = pipeline.canvas
            layout = pipeline.layout
            schedule = pipeline.schedule

            def synthesize(self, *a, **k):
                while not gate["release"]:
                    time.sleep(0.005)
                return pipeline.synthesize(*a, **k)

        with TestClient(create_app(pipeline=Slow(), max_steps=20)) as c:
            before = c.get("/healthz").json()["queue_depth"]
            job_id = submit(c, sketch, seed=1).json()["id"]
            during = c.get("/healthz").json()["queue_depth"]
            assert during == before + 1
            gate["release"] = True
            wait_done(c, job_id)
            assert c.get("/healthz").json()["queue_depth"] == before

    def test_config_exposes_layout_for_overlays(self, client, pipeline):
        body = client.get("/api/config").json()
        assert body["canvas"] == pipeline.canvas
        assert body["regions"] == ["leye", "reye", "nose", "mouth", "face"]
        assert body["layout"] == pipeline.layout.to_dict()
        assert set(body["samplers"]) == {"ddpm", "ddim"}
        assert body["max_steps"] == 20


class TestCache:
    def test_identical_request_and_seed_hits_cache(self, client, sketch):
        first = submit(client, sketch, seed=4242)
        rec_a = wait_done(client, first.json()["id"])
        second = submit(client, sketch, seed=4242)
        assert second.json()["cache_hit"] is True
        rec_b = client.get(f"/api/jobs/{second.json()['id']}").json()
        assert rec_b["state"] == "done"
        assert rec_b["result"] == rec_a["result"]
        assert rec_a["cache_hit"] is False

    def test_different_seed_misses(self, client, sketch):
        wait_done(client, submit(client, sketch, seed=900).json()["id"])
        resp = submit(client, sketch, seed=901)
        assert resp.json()["cache_hit"] is False
        wait_done(client, resp.json()["id"])

    def test_lru_eviction(self, pipeline, sketch):
        app = create_app(pipeline=pipeline, max_steps=20, cache_size=1)
        with TestClient(app) as c:
            wait_done(c, submit(c, sketch, seed=1).json()["id"])
            assert submit(c, sketch, seed=1).json()["cache_hit"] is True
            wait_done(c, submit(c, sketch, seed=2).json()["id"])  # evicts seed=1
            assert submit(c, sketch, seed=2).json()["cache_hit"] is True
            assert submit(c, sketch, seed=1).json()["cache_hit"] is False


class TestWorkerFailure:
    def test_synthesis_error_lands_in_failed_state(self, pipeline, sketch):
        class Broken:
            checkpoint_hash = pipeline.checkpoint_hash
            canvas = pipeline.canvas
            layout = pipeline.layout
            schedule = pipeline.schedule
            calls = 0

            def synthesize(self, *a, **k):
                Broken.calls += 1
                if Broken.calls == 1:
                    raise RuntimeError("sampler exploded")
                return pipeline.synthesize(*a, **k)

        with TestClient(create_app(pipeline=Broken(), max_steps=20)) as c:
            bad = wait_done(c, submit(c, sketch, seed=1).json()["id"])
            assert bad["state"] == "failed"
            assert "sampler exploded" in bad["error"]
            assert bad["result"] is None
            good = wait_done(c, submit(c, sketch, seed=2).json()["id"])
            assert good["state"] == "done"


class TestQueueBounds:
    def test_full_queue_503(self, pipeline, sketch):
        gate = {"release": False}

        class Slow:
            checkpoint_hash = pipeline.checkpoint_hash
            canvas = pipeline.canvas
            layout = pipeline.layout
            schedule = pipeline.schedule

            def synthesize(self, *a, **k):
                while not gate["release"]:
                    time.sleep(0.005)
                return pipeline.synthesize(*a, **k)

        app = create_app(pipeline=Slow(), max_steps=20, queue_len=1)
        with TestClient(app) as c:
            first = submit(c, sketch, seed=1)  # worker grabs this one
            ids = [first.json()["id"]]
            responses = []
            for seed in range(2, 6):  # queue_len=1: at most one more fits
                r = submit(c, sketch, seed=seed)
                responses.append(r.status_code)
                if r.status_code == 202:
                    ids.append(r.json()["id"])
            assert 503 in responses
            gate["release"] = True
            for job_id in ids:
                assert wait_done(c, job_id)["state"] == "done"

    def test_fifo_order(self, pipeline, sketch):
        order = []
        gate = {"release": False}

        class Tracker:
            checkpoint_hash = pipeline.checkpoint_hash
            canvas = pipeline.canvas
            layout = pipeline.layout
            schedule = pipeline.schedule

            def synthesize(self, *a, seed=0, **k):
                while not gate["release"]:
                    time.sleep(0.005)
                order.append(seed)
                return pipeline.synthesize(*a, seed=seed, **k)

        with TestClient(create_app(pipeline=Tracker(), max_steps=20, queue_len=8)) as c:
            ids = [submit(c, sketch, seed=s).json()["id"] for s in (11, 12, 13)]
            gate["release"] = True
            for job_id in ids:
                wait_done(c, job_id)
        assert order == [11, 12, 13]


class TestCors:
    def test_cross_origin_allowed(self, client):
        resp = client.get("/healthz", headers={"Origin": "http://localhost:5173"})
        assert resp.headers.get("access-control-allow-origin") == "*"
