import { describe, expect, it } from "vitest";
import { emptyRaster, inkCount, rastersEqual } from "../src/raster";
import { CanvasState } from "../src/state";

const stroke = (s: CanvasState, x0: number, y0: number, x1: number, y1: number) =>
  s.applyStroke([{ x: x0, y: y0 }, { x: x1, y: y1 }], 3, "draw");

describe("CanvasState undo/redo", () => {
  it("draw then undo restores the exact pre-draw raster", () => {
    const s = new CanvasState(64);
    stroke(s, 5, 5, 20, 20);
    const before = s.snapshot();
    stroke(s, 30, 30, 50, 50);
    expect(rastersEqual(s.ink, before)).toBe(false);
    expect(s.undo()).toBe(true);
    expect(rastersEqual(s.ink, before)).toBe(true);
  });

  it("undo then redo restores the exact raster, byte for byte", () => {
    const s = new CanvasState(64);
    stroke(s, 5, 5, 20, 20);
    stroke(s, 30, 10, 10, 40);
    const drawn = s.snapshot();
    s.undo();
    expect(s.redo()).toBe(true);
    expect(rastersEqual(s.ink, drawn)).toBe(true);
  });

  it("undo on a fresh canvas reports false", () => {
    const s = new CanvasState(32);
    expect(s.undo()).toBe(false);
    expect(s.redo()).toBe(false);
  });

  it("a new stroke clears the redo stack", () => {
    const s = new CanvasState(32);
    stroke(s, 1, 1, 10, 10);
    s.undo();
    stroke(s, 2, 2, 12, 12);
    expect(s.redo()).toBe(false);
  });

  it("erase over a blank area keeps the raster but is still undoable", () => {
    const s = new CanvasState(32);
    const blank = s.snapshot();
    s.applyStroke([{ x: 10, y: 10 }, { x: 20, y: 20 }], 5, "erase");
    expect(rastersEqual(s.ink, blank)).toBe(true);
    expect(s.undoDepth).toBe(1);
    expect(s.undo()).toBe(true);
    expect(rastersEqual(s.ink, blank)).toBe(true);
  });

  it("multi-step undo walks back through every stroke", () => {
    const s = new CanvasState(32);
    const snaps = [s.snapshot()];
    for (let i = 0; i < 4; i++) {
      stroke(s, i * 3, 0, i * 3, 30);
      snaps.push(s.snapshot());
    }
    for (let i = 4; i > 0; i--) {
      expect(s.undo()).toBe(true);
      expect(rastersEqual(s.ink, snaps[i - 1])).toBe(true);
    }
  });
});

describe("CanvasState snapshots and restore", () => {
  it("snapshot matches the live raster and is an independent copy", () => {
    const s = new CanvasState(32);
    stroke(s, 3, 3, 28, 28);
    const snap = s.snapshot();
    expect(rastersEqual(snap, s.ink)).toBe(true);
    snap.data.fill(0);
    expect(inkCount(s.ink)).toBeGreaterThan(0);
  });

  it("restore replaces pixels, copies its argument, and is undoable", () => {
    const s = new CanvasState(32);
    stroke(s, 0, 0, 31, 31);
    const before = s.snapshot();
    const incoming = emptyRaster(32);
    incoming.data[5] = 1;
    s.restore(incoming);
    incoming.data[6] = 1; // caller mutation must not leak in
    expect(s.ink.data[5]).toBe(1);
    expect(s.ink.data[6]).toBe(0);
    s.undo();
    expect(rastersEqual(s.ink, before)).toBe(true);
  });

  it("restore rejects a size mismatch", () => {
    const s = new CanvasState(32);
    expect(() => s.restore(emptyRaster(16))).toThrow(/16x16.*32x32/);
  });

  it("clear empties the canvas and undo brings the drawing back", () => {
    const s = new CanvasState(32);
    stroke(s, 3, 3, 28, 28);
    const drawn = s.snapshot();
    s.clear();
    expect(inkCount(s.ink)).toBe(0);
    s.undo();
    expect(rastersEqual(s.ink, drawn)).toBe(true);
  });

  it("tracks the dirty flag across mutations", () => {
    const s = new CanvasState(32);
    expect(s.dirty).toBe(false);
    stroke(s, 1, 1, 5, 5);
    expect(s.dirty).toBe(true);
  });
});
