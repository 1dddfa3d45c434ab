import { ApiError, JobRecord, getJob } from "./api";

export interface PollOptions {
  intervalMs?: number; // delay between status checks; 1 s by default
  signal?: AbortSignal; // cancels the loop between checks
}

function delay(ms: number, signal?: AbortSignal): Promise<void> {
  return new Promise((resolve, reject) => {
    if (signal?.aborted) {
      reject(new DOMException("poll aborted", "AbortError"));
      return;
    }
    const timer = setTimeout(() => {
      signal?.removeEventListener("abort", onAbort);
      resolve();
    }, ms);
    const onAbort = () => {
      clearTimeout(timer);
      reject(new DOMException("poll aborted", "AbortError"));
    };
    signal?.addEventListener("abort", onAbort, { once: true });
  });
}

// Poll a job until it reaches a terminal state. Transient network failures
// (fetch rejecting without an HTTP status) are retried on the next tick;
// HTTP errors such as 404 are final and propagate.
export async function pollJob(
  base: string,
  id: string,
  options: PollOptions = {},
): Promise<JobRecord> {
  const intervalMs = options.intervalMs ?? 1000;
  for (;;) {
    let job: JobRecord | null = null;
    try {
      job = await getJob(base, id);
    } catch (err) {
      if (err instanceof ApiError) throw err;
      // connection hiccup: keep polling
    }
    if (job && (job.state === "done" || job.state === "failed")) {
      return job;
    }
    await delay(intervalMs, options.signal);
  }
}
