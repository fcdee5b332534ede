/**
 * Viewport math for the pannable/zoomable facsimile canvas.
 *
 * Screen coordinates are image coordinates scaled then panned:
 *   screen = image * scale + pan
 */

export interface ViewportTransform {
  scale: number;
  panX: number;
  panY: number;
}

export interface Point {
  x: number;
  y: number;
}

export type Rect = [number, number, number, number]; // x0, y0, x1, y1 (half-open)

export function imageToScreen(p: Point, t: ViewportTransform): Point {
  return { x: p.x * t.scale + t.panX, y: p.y * t.scale + t.panY };
}

export function screenToImage(p: Point, t: ViewportTransform): Point {
  return { x: (p.x - t.panX) / t.scale, y: (p.y - t.panY) / t.scale };
}

export type RoiResult =
  | { ok: true; roi: Rect }
  | { ok: false; message: string };

/**
 * Convert a screen-space drag rectangle to integer image coordinates:
 * inverse-transform both corners, normalize corner order, clamp to the
 * image bounds, and reject rectangles that end up with no area.
 */
export function roiToImageCoords(
  screenRect: Rect,
  t: ViewportTransform,
  imageWidth: number,
  imageHeight: number,
): RoiResult {
  if (!(t.scale > 0)) {
    return { ok: false, message: `invalid viewport scale ${t.scale}` };
  }
  const a = screenToImage({ x: screenRect[0], y: screenRect[1] }, t);
  const b = screenToImage({ x: screenRect[2], y: screenRect[3] }, t);
  const clamp = (v: number, hi: number) => Math.min(Math.max(v, 0), hi);
  const x0 = Math.round(clamp(Math.min(a.x, b.x), imageWidth));
  const x1 = Math.round(clamp(Math.max(a.x, b.x), imageWidth));
  const y0 = Math.round(clamp(Math.min(a.y, b.y), imageHeight));
  const y1 = Math.round(clamp(Math.max(a.y, b.y), imageHeight));
  if (x1 <= x0 || y1 <= y0) {
    return { ok: false, message: "selection has no area inside the image; draw a larger box" };
  }
  return { ok: true, roi: [x0, y0, x1, y1] };
}

export function zoomAround(t: ViewportTransform, cursor: Point, factor: number): ViewportTransform {
  const scale = Math.min(Math.max(t.scale * factor, 0.05), 40);
  const applied = scale / t.scale;
  return {
    scale,
    panX: cursor.x - (cursor.x - t.panX) * applied,
    panY: cursor.y - (cursor.y - t.panY) * applied,
  };
}

export function panBy(t: ViewportTransform, dx: number, dy: number): ViewportTransform {
  return { scale: t.scale, panX: t.panX + dx, panY: t.panY + dy };
}
