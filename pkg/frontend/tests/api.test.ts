import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiError, getConfig, getHealth, getJob, submitJob } from "../src/api";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("submitJob", () => {
  it("POSTs the request as JSON and returns the job record", async () => {
    const calls: { url: string; init: RequestInit }[] = [];
    vi.stubGlobal("fetch", async (url: string, init: RequestInit) => {
      calls.push({ url, init });
      return jsonResponse(202, { id: "j1", state: "queued" });
    });
    const job = await submitJob("http://svc", { sketch_png: "abc", sampler: "ddim" });
    expect(job.id).toBe("j1");
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://svc/api/jobs");
    expect(calls[0].init.method).toBe("POST");
    expect((calls[0].init.headers as Record<string, string>)["Content-Type"]).toBe(
      "application/json",
    );
    expect(JSON.parse(calls[0].init.body as string)).toEqual({
      sketch_png: "abc",
      sampler: "ddim",
    });
  });

  it("turns an error payload into ApiError with status and detail", async () => {
    vi.stubGlobal("fetch", async () => jsonResponse(422, { detail: "steps must be in [1, 20]" }));
    const err = await submitJob("", { sketch_png: "x" }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.detail).toBe("steps must be in [1, 20]");
    expect(err.message).toContain("422");
  });

  it("falls back to status text when the error body is not JSON", async () => {
    vi.stubGlobal(
      "fetch",
      async () => new Response("<html>boom</html>", { status: 503, statusText: "Service Unavailable" }),
    );
    const err = await submitJob("", { sketch_png: "x" }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.detail).toBe("Service Unavailable");
  });
});

describe("read endpoints", () => {
  it("getJob hits /api/jobs/<id>", async () => {
    const urls: string[] = [];
    vi.stubGlobal("fetch", async (url: string) => {
      urls.push(url);
      return jsonResponse(200, { id: "abc", state: "done" });
    });
    const job = await getJob("http://svc", "abc");
    expect(job.state).toBe("done");
    expect(urls).toEqual(["http://svc/api/jobs/abc"]);
  });

  it("getConfig and getHealth parse their payloads", async () => {
    vi.stubGlobal("fetch", async (url: string) =>
      url.endsWith("/healthz")
        ? jsonResponse(200, { status: "ok", model: null, queue_depth: 0 })
        : jsonResponse(200, { model: "ffff", canvas: 32 }),
    );
    expect((await getConfig("")).canvas).toBe(32);
    expect((await getHealth("")).queue_depth).toBe(0);
  });

  it("getJob surfaces 404 as ApiError", async () => {
    vi.stubGlobal("fetch", async () => jsonResponse(404, { detail: "unknown job id" }));
    await expect(getJob("", "nope")).rejects.toMatchObject({ status: 404 });
  });
});
