import { JobRecord, JobRequest, submitJob } from "./api";
import { SessionHistory, HistoryEntry, RequestParams } from "./history";
import { bytesToBase64, encodeRasterPng } from "./png";
import { pollJob } from "./poll";
import { CanvasState } from "./state";

export class JobFailedError extends Error {
  constructor(
    readonly job: JobRecord,
    detail: string,
  ) {
    super(`synthesis failed: ${detail}`);
    this.name = "JobFailedError";
  }
}

// One synthesize round-trip: snapshot the sketch, submit, poll to a terminal
// state, append to history on success. The snapshot is taken before the
// request leaves, so whatever the user draws while waiting cannot leak into
// the history entry. One job in flight at a time.
export class Studio {
  readonly history: SessionHistory;
  private inFlight = false;

  constructor(
    readonly base: string,
    history?: SessionHistory,
    private pollIntervalMs = 1000,
  ) {
    this.history = history ?? new SessionHistory();
  }

  get busy(): boolean {
    return this.inFlight;
  }

  async synthesize(
    state: CanvasState,
    params: RequestParams,
    signal?: AbortSignal,
  ): Promise<HistoryEntry> {
    if (this.inFlight) {
      throw new Error("a synthesis job is already in flight");
    }
    this.inFlight = true;
    try {
      const sketch = state.snapshot();
      const request: JobRequest = {
        sketch_png: bytesToBase64(await encodeRasterPng(sketch)),
        sampler: params.sampler,
      };
      if (params.steps != null) request.steps = params.steps;
      if (params.seed != null) request.seed = params.seed;
      if (params.maskedRegions.length > 0) {
        request.masked_regions = [...params.maskedRegions];
      }
      const submitted = await submitJob(this.base, request);
      const job =
        submitted.state === "done" || submitted.state === "failed"
          ? submitted // cache hits come back already finished
          : await pollJob(this.base, submitted.id, {
              intervalMs: this.pollIntervalMs,
              signal,
            });
      if (job.state === "failed") {
        throw new JobFailedError(job, job.error ?? "unknown error");
      }
      return this.history.append({
        sketch,
        params: { ...params, maskedRegions: [...params.maskedRegions] },
        result: job.result,
        jobId: job.id,
      });
    } finally {
      this.inFlight = false;
    }
  }
}
