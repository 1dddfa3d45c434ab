// Logical stroke bitmap: the studio draws on a fixed-size monochrome raster
// and only scales it for display, so exports never depend on screen pixels.

export interface Raster {
  size: number;
  data: Uint8Array; // row-major, 1 = ink, 0 = blank
}

export interface StrokePoint {
  x: number;
  y: number;
}

export function emptyRaster(size: number): Raster {
  if (!Number.isInteger(size) || size < 1) {
    throw new Error(`raster size must be a positive integer, got ${size}`);
  }
  return { size, data: new Uint8Array(size * size) };
}

export function cloneRaster(r: Raster): Raster {
  return { size: r.size, data: new Uint8Array(r.data) };
}

export function rastersEqual(a: Raster, b: Raster): boolean {
  if (a.size !== b.size) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}

export function inkCount(r: Raster): number {
  let n = 0;
  for (let i = 0; i < r.data.length; i++) n += r.data[i];
  return n;
}

function stampDisc(r: Raster, cx: number, cy: number, radius: number, value: 0 | 1): void {
  const r2 = radius * radius;
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(r.size - 1, Math.ceil(cx + radius));
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(r.size - 1, Math.ceil(cy + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) r.data[y * r.size + x] = value;
    }
  }
}

// Stamp a polyline onto the raster in place. Width is the brush diameter in
// raster pixels; mode "erase" clears ink instead of laying it down.
export function stampStroke(
  r: Raster,
  path: StrokePoint[],
  width: number,
  mode: "draw" | "erase",
): void {
  if (path.length === 0) return;
  if (!(width > 0)) throw new Error(`stroke width must be positive, got ${width}`);
  const radius = Math.max(width / 2, 0.5);
  const value = mode === "erase" ? 0 : 1;
  let prev = path[0];
  stampDisc(r, prev.x, prev.y, radius, value);
  for (let i = 1; i < path.length; i++) {
    const next = path[i];
    const steps = Math.max(1, Math.ceil(Math.hypot(next.x - prev.x, next.y - prev.y)));
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      stampDisc(r, prev.x + (next.x - prev.x) * t, prev.y + (next.y - prev.y) * t, radius, value);
    }
    prev = next;
  }
}
