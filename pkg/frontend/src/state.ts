import { Raster, StrokePoint, cloneRaster, emptyRaster, stampStroke } from "./raster";

// Canvas model behind the drawing surface. Every mutation snapshots the full
// raster onto the undo stack, so undo -> redo restores byte-identical pixels.
export class CanvasState {
  readonly size: number;
  overlayVisible = false;
  dirty = false;

  private raster: Raster;
  private undoStack: Raster[] = [];
  private redoStack: Raster[] = [];

  constructor(size = 256) {
    this.size = size;
    this.raster = emptyRaster(size);
  }

  // Live raster for rendering; treat as read-only and use snapshot() for copies.
  get ink(): Raster {
    return this.raster;
  }

  snapshot(): Raster {
    return cloneRaster(this.raster);
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  get redoDepth(): number {
    return this.redoStack.length;
  }

  applyStroke(path: StrokePoint[], width: number, mode: "draw" | "erase"): void {
    this.undoStack.push(cloneRaster(this.raster));
    this.redoStack.length = 0;
    stampStroke(this.raster, path, width, mode);
    this.dirty = true;
  }

  // Replace the raster wholesale (history restore, PNG import). Undoable.
  restore(r: Raster): void {
    if (r.size !== this.size) {
      throw new Error(`raster is ${r.size}x${r.size}, canvas is ${this.size}x${this.size}`);
    }
    this.undoStack.push(cloneRaster(this.raster));
    this.redoStack.length = 0;
    this.raster = cloneRaster(r);
    this.dirty = true;
  }

  clear(): void {
    this.restore(emptyRaster(this.size));
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.raster);
    this.raster = prev;
    this.dirty = true;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.raster);
    this.raster = next;
    this.dirty = true;
    return true;
  }
}
