"""Drive the HTTP synthesis service the way a browser client would.

Starts the real server (uvicorn) on a local port with the demo-02
checkpoint, then speaks plain HTTP to it: read the service config, submit a
sketch as base64 PNG, poll the job to completion, save the result, and
re-submit the identical request to show the result cache answering
instantly.

Run:  python3 demos/02_train_and_synthesize.py   (once, to get a model)
      python3 demos/04_synthesis_service.py
"""

import base64
import json
import sys
import threading
import time
import urllib.request
from pathlib import Path

import uvicorn

from sketchdiff.service import create_app

run = Path("demo_run")
if not (run / "model.ckpt").exists():
    sys.exit("no demo_run/model.ckpt found - run demos/02_train_and_synthesize.py first")

PORT = 8977
BASE = f"http://127.0.0.1:{PORT}"


def get(path: str) -> dict:
    with urllib.request.urlopen(f"{BASE}{path}") as resp:
        return json.load(resp)


def post(path: str, payload: dict) -> dict:
    req = urllib.request.Request(
        f"{BASE}{path}",
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as resp:
        return json.load(resp)


server = uvicorn.Server(
    uvicorn.Config(
        create_app(checkpoint_path=run / "model.ckpt"),
        host="127.0.0.1",
        port=PORT,
        log_level="warning",
    )
)
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.05)

health = get("/healthz")
config = get("/api/config")
print(f"server up: model {health['model'][:12]}..., canvas {config['canvas']}, "
      f"samplers {config['samplers']}, regions {config['regions']}")

# submit the mid-abstraction sketch of the first test face
manifest = json.loads((run / "ds" / "manifest.json").read_text())
record = next(r for r in manifest["records"] if r["id"] == manifest["split"]["test"][0])
sketch_png = (run / "ds" / record["sketches"]["mid"]).read_bytes()
request = {
    "sketch_png": base64.b64encode(sketch_png).decode(),
    "sampler": "ddim",
    "steps": 50,
    "seed": 99,
    "masked_regions": [],
}

submitted = post("/api/jobs", request)
print(f"\nsubmitted job {submitted['id'][:12]}... state={submitted['state']}")
while True:
    job = get(f"/api/jobs/{submitted['id']}")
    if job["state"] in ("done", "failed"):
        break
    time.sleep(0.2)
if job["state"] == "failed":
    sys.exit(f"job failed: {job['error']}")

elapsed = job["timings"]["finished_at"] - job["timings"]["queued_at"]
out = run / "service_result.png"
out.write_bytes(base64.b64decode(job["result"]))
print(f"job done in {elapsed:.2f}s -> {out}")

# identical request + identical seed = cache hit, no second sampling run
again = post("/api/jobs", request)
job2 = get(f"/api/jobs/{again['id']}")
print(f"\nsame request again: cache_hit={again['cache_hit']}, "
      f"bytes identical={job2['result'] == job['result']}")

server.should_exit = True
