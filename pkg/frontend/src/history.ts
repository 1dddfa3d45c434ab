import { Raster, cloneRaster } from "./raster";

export interface RequestParams {
  steps: number | null;
  sampler: string;
  seed: number | null;
  maskedRegions: string[];
}

export interface HistoryEntry {
  sketch: Raster; // snapshot of the submitted sketch, never the live raster
  params: RequestParams;
  result: string | null; // base64 PNG returned by the service
  jobId: string;
}

// Append-only session log. Entries are defensive copies frozen on the way
// in, so later canvas edits can never rewrite what was submitted.
export class SessionHistory {
  private entries: HistoryEntry[] = [];

  get length(): number {
    return this.entries.length;
  }

  append(entry: HistoryEntry): HistoryEntry {
    const stored: HistoryEntry = Object.freeze({
      sketch: cloneRaster(entry.sketch),
      params: Object.freeze({
        ...entry.params,
        maskedRegions: [...entry.params.maskedRegions],
      }),
      result: entry.result,
      jobId: entry.jobId,
    });
    this.entries.push(stored);
    return stored;
  }

  entry(k: number): HistoryEntry {
    if (k < 0 || k >= this.entries.length) {
      throw new Error(`history has ${this.entries.length} entries, asked for ${k}`);
    }
    return this.entries[k];
  }

  // Copy of entry k's sketch, safe to hand to CanvasState.restore.
  sketchOf(k: number): Raster {
    return cloneRaster(this.entry(k).sketch);
  }

  list(): readonly HistoryEntry[] {
    return this.entries;
  }
}
