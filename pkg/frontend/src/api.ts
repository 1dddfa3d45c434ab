// Typed wrappers over the synthesis service HTTP API. Every studio request
// goes through these: the UI stays testable against any fetch-shaped mock.

export interface LayoutDict {
  canvas: number;
  [region: string]: number | number[]; // region name -> [x0, y0, x1, y1]
}

export interface ServiceConfig {
  model: string | null;
  canvas?: number;
  regions?: string[];
  layout?: LayoutDict;
  samplers?: string[];
  max_steps?: number;
  default_steps?: number;
}

export interface HealthReport {
  status: string;
  model: string | null;
  queue_depth: number;
}

export interface JobRequest {
  sketch_png: string; // base64 PNG at the model's canvas size
  steps?: number;
  sampler?: string;
  seed?: number;
  masked_regions?: string[];
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  id: string;
  state: JobState;
  request_hash: string;
  sampler: string;
  seed: number;
  masked_regions: string[];
  steps: number | null;
  result: string | null; // base64 PNG once done
  error: string | null;
  cache_hit: boolean;
  timings: {
    queued_at: number;
    started_at: number | null;
    finished_at: number | null;
  };
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service returned ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function readError(response: Response): Promise<never> {
  let detail = response.statusText || "request failed";
  try {
    const body = await response.json();
    if (body && typeof body === "object" && "detail" in body) {
      detail = String((body as { detail: unknown }).detail);
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export async function getConfig(base: string): Promise<ServiceConfig> {
  const response = await fetch(`${base}/api/config`);
  if (!response.ok) await readError(response);
  return response.json();
}

export async function getHealth(base: string): Promise<HealthReport> {
  const response = await fetch(`${base}/healthz`);
  if (!response.ok) await readError(response);
  return response.json();
}

export async function submitJob(base: string, request: JobRequest): Promise<JobRecord> {
  const response = await fetch(`${base}/api/jobs`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
  });
  if (!response.ok) await readError(response);
  return response.json();
}

export async function getJob(base: string, id: string): Promise<JobRecord> {
  const response = await fetch(`${base}/api/jobs/${id}`);
  if (!response.ok) await readError(response);
  return response.json();
}
