import { describe, expect, it } from "vitest";

import {
  Rect, ViewportTransform, imageToScreen, panBy, roiToImageCoords, screenToImage, zoomAround,
} from "../src/transform";

describe("roiToImageCoords", () => {
  it("is the identity at scale 1, pan (0,0)", () => {
    const t: ViewportTransform = { scale: 1, panX: 0, panY: 0 };
    const result = roiToImageCoords([10, 20, 110, 220], t, 500, 500);
    expect(result).toEqual({ ok: true, roi: [10, 20, 110, 220] });
  });

  it("maps the hand-evaluated affine case", () => {
    // scale 2, pan (10,10): screen (10,10,210,110) -> image (0,0,100,50)
    const t: ViewportTransform = { scale: 2, panX: 10, panY: 10 };
    const result = roiToImageCoords([10, 10, 210, 110], t, 500, 500);
    expect(result).toEqual({ ok: true, roi: [0, 0, 100, 50] });
  });

  it("normalizes rectangles drawn right-to-left / bottom-to-top", () => {
    const t: ViewportTransform = { scale: 1, panX: 0, panY: 0 };
    const result = roiToImageCoords([110, 220, 10, 20], t, 500, 500);
    expect(result).toEqual({ ok: true, roi: [10, 20, 110, 220] });
  });

  it("clamps to image bounds", () => {
    const t: ViewportTransform = { scale: 1, panX: 0, panY: 0 };
    const result = roiToImageCoords([-50, -50, 600, 700], t, 500, 400);
    expect(result).toEqual({ ok: true, roi: [0, 0, 500, 400] });
  });

  it("rejects zero-area selections after clamping", () => {
    const t: ViewportTransform = { scale: 1, panX: 0, panY: 0 };
    const offImage = roiToImageCoords([600, 600, 700, 700], t, 500, 500);
    expect(offImage.ok).toBe(false);
    const degenerate = roiToImageCoords([10, 10, 10, 50], t, 500, 500);
    expect(degenerate.ok).toBe(false);
    if (!degenerate.ok) expect(degenerate.message).toMatch(/area/);
  });
});

describe("coordinate round trips", () => {
  it("image -> screen -> image is exact to < 0.5 px for random transforms", () => {
    let seed = 42;
    const rand = () => {
      // deterministic LCG keeps the test reproducible
      seed = (seed * 1664525 + 1013904223) % 4294967296;
      return seed / 4294967296;
    };
    for (let trial = 0; trial < 200; trial++) {
      const t: ViewportTransform = {
        scale: 0.1 + rand() * 8,
        panX: (rand() - 0.5) * 2000,
        panY: (rand() - 0.5) * 2000,
      };
      const p = { x: rand() * 1000, y: rand() * 1000 };
      const round = screenToImage(imageToScreen(p, t), t);
      expect(Math.abs(round.x - p.x)).toBeLessThan(0.5);
      expect(Math.abs(round.y - p.y)).toBeLessThan(0.5);
    }
  });
});

describe("viewport updates", () => {
  it("zoomAround keeps the cursor's image point fixed", () => {
    const t: ViewportTransform = { scale: 1.5, panX: 30, panY: -20 };
    const cursor = { x: 200, y: 150 };
    const before = screenToImage(cursor, t);
    const after = screenToImage(cursor, zoomAround(t, cursor, 1.6));
    expect(Math.abs(after.x - before.x)).toBeLessThan(1e-9);
    expect(Math.abs(after.y - before.y)).toBeLessThan(1e-9);
  });

  it("panBy shifts screen-space only", () => {
    const t = panBy({ scale: 2, panX: 5, panY: 5 }, 10, -10);
    expect(t).toEqual({ scale: 2, panX: 15, panY: -5 });
  });
});
