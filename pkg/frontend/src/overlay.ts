import { LayoutDict } from "./api";

export interface OverlayRect {
  name: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

// Region boxes from the service config, scaled from layout coordinates to
// display pixels. Box bounds are half-open ([x0, x1)), matching the service.
export function overlayRects(layout: LayoutDict, displaySize: number): OverlayRect[] {
  const scale = displaySize / layout.canvas;
  const rects: OverlayRect[] = [];
  for (const [name, box] of Object.entries(layout)) {
    if (!Array.isArray(box)) continue; // skip the canvas field
    const [x0, y0, x1, y1] = box;
    rects.push({
      name,
      x: x0 * scale,
      y: y0 * scale,
      w: (x1 - x0) * scale,
      h: (y1 - y0) * scale,
    });
  }
  return rects;
}
