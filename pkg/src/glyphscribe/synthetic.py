"""Synthetic glyph rendering: a stand-in corpus of distinct ink shapes.

The real facsimile corpus is not redistributable, so benchmarks and the demo
pages use procedurally drawn glyph-like shapes: dark ink on a light ground,
one shape family per class, with per-sample rotation/shift/scale/stroke/noise
perturbations.  Pages composed from these glyphs exercise segmentation and
the end-to-end service flow.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .corpus import LabeledSample

# Shape families; each gets a distinct (valid) code so the synthetic corpus
# walks through the whole pipeline unchanged.
SHAPES = [
    "bar_v", "bar_h", "cross", "saltire", "circle", "ring",
    "triangle", "square", "diamond", "zigzag", "wave", "arch",
    "cup", "tee", "ell", "aitch", "steps", "star",
    "ladder", "comb", "hourglass", "arrow", "crescent", "dots",
]

_LETTERS = "ABCDEFGHIKLMNOPQRSTUVWXY"
SHAPE_CODES = {shape: f"{_LETTERS[i]}1" for i, shape in enumerate(SHAPES)}
CODE_SHAPES = {code: shape for shape, code in SHAPE_CODES.items()}


def _poly(draw: ImageDraw.ImageDraw, pts, w):
    draw.line(list(pts) + [pts[0]], fill=0, width=w, joint="curve")


def _draw_shape(draw: ImageDraw.ImageDraw, shape: str, lo: float, hi: float, w: int):
    """Draw one shape family into the box [lo, hi]^2 with stroke width w."""
    mid = (lo + hi) / 2
    span = hi - lo
    q = span / 4
    if shape == "bar_v":
        draw.line([(mid, lo), (mid, hi)], fill=0, width=w)
    elif shape == "bar_h":
        draw.line([(lo, mid), (hi, mid)], fill=0, width=w)
    elif shape == "cross":
        draw.line([(mid, lo), (mid, hi)], fill=0, width=w)
        draw.line([(lo, mid), (hi, mid)], fill=0, width=w)
    elif shape == "saltire":
        draw.line([(lo, lo), (hi, hi)], fill=0, width=w)
        draw.line([(lo, hi), (hi, lo)], fill=0, width=w)
    elif shape == "circle":
        draw.ellipse([lo, lo, hi, hi], fill=0)
    elif shape == "ring":
        draw.ellipse([lo, lo, hi, hi], outline=0, width=w)
    elif shape == "triangle":
        _poly(draw, [(mid, lo), (hi, hi), (lo, hi)], w)
    elif shape == "square":
        draw.rectangle([lo, lo, hi, hi], outline=0, width=w)
    elif shape == "diamond":
        _poly(draw, [(mid, lo), (hi, mid), (mid, hi), (lo, mid)], w)
    elif shape == "zigzag":
        pts = [(lo, lo), (lo + q, hi), (mid, lo), (mid + q, hi), (hi, lo)]
        draw.line(pts, fill=0, width=w, joint="curve")
    elif shape == "wave":
        draw.arc([lo, lo, mid, hi], 180, 360, fill=0, width=w)
        draw.arc([mid, lo, hi, hi], 0, 180, fill=0, width=w)
    elif shape == "arch":
        draw.arc([lo, lo, hi, hi + span], 180, 360, fill=0, width=w)
    elif shape == "cup":
        draw.arc([lo, lo - span, hi, hi], 0, 180, fill=0, width=w)
    elif shape == "tee":
        draw.line([(lo, lo), (hi, lo)], fill=0, width=w)
        draw.line([(mid, lo), (mid, hi)], fill=0, width=w)
    elif shape == "ell":
        draw.line([(lo, lo), (lo, hi), (hi, hi)], fill=0, width=w, joint="curve")
    elif shape == "aitch":
        draw.line([(lo, lo), (lo, hi)], fill=0, width=w)
        draw.line([(hi, lo), (hi, hi)], fill=0, width=w)
        draw.line([(lo, mid), (hi, mid)], fill=0, width=w)
    elif shape == "steps":
        pts = [(lo, hi), (lo, mid), (mid, mid), (mid, lo), (hi, lo)]
        draw.line(pts, fill=0, width=w, joint="curve")
    elif shape == "star":
        for dx, dy in [(0, 1), (1, 0), (1, 1), (1, -1)]:
            draw.line(
                [(mid - dx * q * 1.8, mid - dy * q * 1.8), (mid + dx * q * 1.8, mid + dy * q * 1.8)],
                fill=0, width=w,
            )
    elif shape == "ladder":
        draw.line([(lo + q / 2, lo), (lo + q / 2, hi)], fill=0, width=w)
        draw.line([(hi - q / 2, lo), (hi - q / 2, hi)], fill=0, width=w)
        for t in (0.15, 0.5, 0.85):
            y = lo + t * span
            draw.line([(lo + q / 2, y), (hi - q / 2, y)], fill=0, width=w)
    elif shape == "comb":
        draw.line([(lo, lo), (hi, lo)], fill=0, width=w)
        for t in (0.0, 0.33, 0.67, 1.0):
            x = lo + t * span
            draw.line([(x, lo), (x, hi)], fill=0, width=w)
    elif shape == "hourglass":
        _poly(draw, [(lo, lo), (hi, lo), (lo, hi), (hi, hi)], w)
    elif shape == "arrow":
        draw.line([(mid, hi), (mid, lo)], fill=0, width=w)
        draw.line([(lo + q, lo + q), (mid, lo)], fill=0, width=w)
        draw.line([(hi - q, lo + q), (mid, lo)], fill=0, width=w)
    elif shape == "crescent":
        draw.ellipse([lo, lo, hi, hi], fill=0)
        draw.ellipse([lo + q, lo - q / 2, hi + q, hi - q / 2], fill=255)
    elif shape == "dots":
        r = max(2, span / 8)
        for cx, cy in [(lo + q, lo + q), (hi - q, lo + q), (mid, mid),
                       (lo + q, hi - q), (hi - q, hi - q)]:
            draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=0)
    else:
        raise ValueError(f"unknown shape {shape!r}")


def render_glyph(
    shape: str,
    size: int = 100,
    rng: np.random.Generator | None = None,
    perturb: bool = True,
) -> np.ndarray:
    """Render one glyph as uint8 grayscale, ink 0 on background 255.

    Drawn at 2x resolution and downsampled for soft edges.  With ``perturb``
    the sample gets a random rotation (within ±12 degrees), shift, scale and
    stroke-width jitter plus mild pixel noise.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    big = size * 2
    im = Image.new("L", (big, big), 255)
    draw = ImageDraw.Draw(im)

    scale = rng.uniform(0.82, 1.05) if perturb else 1.0
    half = 0.34 * big * scale
    stroke = max(3, int(big * 0.045 * (rng.uniform(0.8, 1.25) if perturb else 1.0)))
    _draw_shape(draw, shape, big / 2 - half, big / 2 + half, stroke)

    if perturb:
        angle = rng.uniform(-12, 12)
        shift = tuple(rng.integers(-big // 20, big // 20 + 1, size=2))
        im = im.rotate(angle, resample=Image.BILINEAR, fillcolor=255, translate=shift)
    im = im.resize((size, size), Image.BILINEAR)
    arr = np.asarray(im, dtype=np.float64)
    if perturb:
        arr = arr + rng.normal(0, 6.0, arr.shape)
    return np.clip(arr, 0, 255).astype(np.uint8)


def make_dataset(
    shapes: list[str] | None = None,
    per_class: int = 50,
    size: int = 100,
    seed: int = 0,
    page_count: int = 0,
) -> list[LabeledSample]:
    """Perturbed samples for each shape class, optionally tagged with page ids."""
    if shapes is None:
        shapes = SHAPES
    rng = np.random.default_rng(seed)
    samples = []
    for shape in shapes:
        code = SHAPE_CODES[shape]
        for i in range(per_class):
            page = f"page{rng.integers(page_count)}" if page_count else None
            samples.append(
                LabeledSample(
                    image=render_glyph(shape, size=size, rng=rng),
                    code=code,
                    page_id=page,
                    sample_id=f"{code}/{shape}_{i:04d}",
                )
            )
    return samples


def compose_page(
    columns: list[list[str]],
    glyph_size: int = 40,
    col_gap: int = 30,
    row_gap: int = 12,
    margin: int = 25,
    seed: int = 0,
) -> tuple[np.ndarray, list[tuple[str, tuple[int, int, int, int]]]]:
    """Compose shape columns into a page image.

    ``columns`` lists shape names per vertical column, left to right.  Returns
    the uint8 page and ground truth ``(code, (x0, y0, x1, y1))`` per glyph.
    """
    rng = np.random.default_rng(seed)
    n_cols = len(columns)
    n_rows = max((len(c) for c in columns), default=0)
    width = 2 * margin + n_cols * glyph_size + max(0, n_cols - 1) * col_gap
    height = 2 * margin + n_rows * glyph_size + max(0, n_rows - 1) * row_gap
    page = np.full((height, width), 255, dtype=np.uint8)
    truth = []
    for ci, col in enumerate(columns):
        x0 = margin + ci * (glyph_size + col_gap)
        for ri, shape in enumerate(col):
            y0 = margin + ri * (glyph_size + row_gap)
            glyph = render_glyph(shape, size=glyph_size, rng=rng)
            page[y0 : y0 + glyph_size, x0 : x0 + glyph_size] = np.minimum(
                page[y0 : y0 + glyph_size, x0 : x0 + glyph_size], glyph
            )
            truth.append((SHAPE_CODES[shape], (x0, y0, x0 + glyph_size, y0 + glyph_size)))
    return page, truth
