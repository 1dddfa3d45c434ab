import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiError, JobRecord } from "../src/api";
import { bytesToBase64, decodeRasterPng, base64ToBytes, encodeRasterPng } from "../src/png";
import { Raster, emptyRaster, rastersEqual } from "../src/raster";
import { CanvasState } from "../src/state";
import { JobFailedError, Studio } from "../src/studio";

// In-memory stand-in for the synthesis service: accepts jobs, requires one
// poll before completing, and "synthesizes" by echoing a fixed PNG. Behavior
// knobs cover the failure paths the studio must surface.
class MockServer {
  jobs = new Map<string, { polls: number; record: JobRecord }>();
  submitted: { body: Record<string, unknown> }[] = [];
  resultPng = "";
  rejectWith: { status: number; detail: string } | null = null;
  failJobs = false;
  networkDown = false;
  private nextId = 1;

  async init(): Promise<void> {
    const face = emptyRaster(8);
    face.data.fill(1, 0, 8);
    this.resultPng = bytesToBase64(await encodeRasterPng(face));
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    if (this.networkDown) throw new TypeError("fetch failed");
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), { status });

    if (url.endsWith("/api/jobs") && init?.method === "POST") {
      if (this.rejectWith) return json(this.rejectWith.status, { detail: this.rejectWith.detail });
      const body = JSON.parse(init.body as string);
      this.submitted.push({ body });
      const id = `job-${this.nextId++}`;
      const record: JobRecord = {
        id,
        state: "queued",
        request_hash: "h",
        sampler: body.sampler ?? "ddim",
        seed: body.seed ?? 1234,
        masked_regions: body.masked_regions ?? [],
        steps: body.steps ?? null,
        result: null,
        error: null,
        cache_hit: false,
        timings: { queued_at: 0, started_at: null, finished_at: null },
      };
      this.jobs.set(id, { polls: 0, record });
      return json(202, record);
    }

    const match = url.match(/\/api\/jobs\/([^/]+)$/);
    if (match) {
      const job = this.jobs.get(match[1]);
      if (!job) return json(404, { detail: "unknown job id" });
      job.polls++;
      if (job.polls >= 2) {
        job.record = this.failJobs
          ? { ...job.record, state: "failed", error: "sampler exploded" }
          : { ...job.record, state: "done", result: this.resultPng };
      } else {
        job.record = { ...job.record, state: "running" };
      }
      return json(200, job.record);
    }
    return json(404, { detail: `no route for ${url}` });
  };
}

async function serverAndStudio(): Promise<{ server: MockServer; studio: Studio }> {
  const server = new MockServer();
  await server.init();
  vi.stubGlobal("fetch", server.fetch);
  return { server, studio: new Studio("", undefined, 1) };
}

function drawFace(state: CanvasState): void {
  state.applyStroke([{ x: 4, y: 4 }, { x: 27, y: 4 }, { x: 27, y: 27 }], 2, "draw");
  state.applyStroke([{ x: 10, y: 12 }, { x: 14, y: 12 }], 1, "draw");
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("synthesize round trip", () => {
  it("submits the drawn sketch, polls to done, and appends history", async () => {
    const { server, studio } = await serverAndStudio();
    const state = new CanvasState(32);
    drawFace(state);

    const entry = await studio.synthesize(state, {
      steps: 10,
      sampler: "ddim",
      seed: 7,
      maskedRegions: [],
    });

    expect(studio.history.length).toBe(1);
    expect(entry.result).toBe(server.resultPng);
    expect(entry.jobId).toBe("job-1");

    // the submitted PNG decodes back to exactly the on-screen raster
    const sent = server.submitted[0].body;
    const sentRaster = await decodeRasterPng(base64ToBytes(sent.sketch_png as string));
    expect(rastersEqual(sentRaster, state.ink)).toBe(true);
    expect(sent.steps).toBe(10);
    expect(sent.seed).toBe(7);
  });

  it("restoring a history entry reproduces the submitted sketch exactly", async () => {
    const { studio } = await serverAndStudio();
    const state = new CanvasState(32);
    drawFace(state);
    const submitted = state.snapshot();

    await studio.synthesize(state, { steps: null, sampler: "ddim", seed: 1, maskedRegions: [] });
    // keep editing after the job: the history snapshot must not move
    state.applyStroke([{ x: 0, y: 31 }, { x: 31, y: 0 }], 6, "draw");
    state.clear();

    state.restore(studio.history.sketchOf(0));
    expect(rastersEqual(state.ink, submitted)).toBe(true);
  });

  it("omits masked_regions when nothing is masked, includes it otherwise", async () => {
    const { server, studio } = await serverAndStudio();
    const state = new CanvasState(32);
    drawFace(state);

    await studio.synthesize(state, { steps: null, sampler: "ddim", seed: 1, maskedRegions: [] });
    expect("masked_regions" in server.submitted[0].body).toBe(false);
    expect("steps" in server.submitted[0].body).toBe(false);
    expect("seed" in server.submitted[0].body).toBe(true);

    await studio.synthesize(state, {
      steps: null,
      sampler: "ddim",
      seed: 2,
      maskedRegions: ["nose", "mouth"],
    });
    expect(server.submitted[1].body.masked_regions).toEqual(["nose", "mouth"]);
  });

  it("seedless requests leave seed selection to the service", async () => {
    const { server, studio } = await serverAndStudio();
    const state = new CanvasState(32);
    drawFace(state);
    const entry = await studio.synthesize(state, {
      steps: null,
      sampler: "ddim",
      seed: null,
      maskedRegions: [],
    });
    expect("seed" in server.submitted[0].body).toBe(false);
    expect(entry.params.seed).toBeNull();
  });
});

describe("failure handling", () => {
  it("a 422 rejection surfaces as ApiError and history stays empty", async () => {
    const { server, studio } = await serverAndStudio();
    server.rejectWith = { status: 422, detail: "sketch is 16x16, expected 32x32" };
    const state = new CanvasState(16);
    drawFace(state);
    const err = await studio
      .synthesize(state, { steps: null, sampler: "ddim", seed: 1, maskedRegions: [] })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.detail).toContain("expected 32x32");
    expect(studio.history.length).toBe(0);
  });

  it("a 503 (no model / full queue) keeps history unchanged", async () => {
    const { server, studio } = await serverAndStudio();
    server.rejectWith = { status: 503, detail: "no model loaded" };
    const state = new CanvasState(32);
    drawFace(state);
    await expect(
      studio.synthesize(state, { steps: null, sampler: "ddim", seed: 1, maskedRegions: [] }),
    ).rejects.toMatchObject({ status: 503 });
    expect(studio.history.length).toBe(0);
  });

  it("a failed job raises JobFailedError with the worker message", async () => {
    const { server, studio } = await serverAndStudio();
    server.failJobs = true;
    const state = new CanvasState(32);
    drawFace(state);
    const err = await studio
      .synthesize(state, { steps: null, sampler: "ddim", seed: 1, maskedRegions: [] })
      .catch((e) => e);
    expect(err).toBeInstanceOf(JobFailedError);
    expect(err.message).toContain("sampler exploded");
    expect(studio.history.length).toBe(0);
  });

  it("a dead service keeps history unchanged and the studio usable", async () => {
    const { server, studio } = await serverAndStudio();
    server.networkDown = true;
    const state = new CanvasState(32);
    drawFace(state);
    await expect(
      studio.synthesize(state, { steps: null, sampler: "ddim", seed: 1, maskedRegions: [] }),
    ).rejects.toThrow(/fetch failed/);
    expect(studio.history.length).toBe(0);
    expect(studio.busy).toBe(false);

    server.networkDown = false; // the retry after recovery succeeds
    await studio.synthesize(state, { steps: null, sampler: "ddim", seed: 1, maskedRegions: [] });
    expect(studio.history.length).toBe(1);
  });

  it("rejects a second synthesize while one is in flight", async () => {
    const { studio } = await serverAndStudio();
    const state = new CanvasState(32);
    drawFace(state);
    const first = studio.synthesize(state, {
      steps: null,
      sampler: "ddim",
      seed: 1,
      maskedRegions: [],
    });
    await expect(
      studio.synthesize(state, { steps: null, sampler: "ddim", seed: 2, maskedRegions: [] }),
    ).rejects.toThrow(/already in flight/);
    await first;
    expect(studio.history.length).toBe(1);
  });
});
