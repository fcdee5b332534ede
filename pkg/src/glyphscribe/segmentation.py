"""Isolate sign candidates from a facsimile region.

Pipeline: local-mean adaptive binarization -> 8-connected component
extraction -> size filtering -> column clustering -> reading-ordered square
crops.  All thresholds are empirical and live in ``SegmentationConfig``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SegmentationConfig:
    window: int = 35
    offset: float = 10.0
    min_area: int = 30
    max_area: int = 1_000_000
    min_dim: int = 5
    max_dim: int = 1000
    gap_factor: float = 2.0
    column_direction: str = "ltr"
    canonical_size: int = 100
    crop_margin: int = 2
    pad_value: int = 255

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.column_direction not in ("ltr", "rtl"):
            raise ValueError(f"column_direction must be 'ltr' or 'rtl', got {self.column_direction!r}")
        if not (0 <= self.min_area <= self.max_area):
            raise ValueError("need 0 <= min_area <= max_area")
        if not (0 <= self.min_dim <= self.max_dim):
            raise ValueError("need 0 <= min_dim <= max_dim")
        if self.gap_factor <= 0:
            raise ValueError("gap_factor must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SegmentationConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True, eq=False)
class ComponentBox:
    """One 8-connected foreground region with its bounding box and mask."""

    x0: int
    y0: int
    x1: int
    y1: int
    area: int
    centroid: tuple[float, float]  # (cx, cy)
    mask: np.ndarray = field(repr=False)  # bool, shape (y1-y0, x1-x0)

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def pixel_coords(self) -> frozenset[tuple[int, int]]:
        """Absolute (y, x) coordinates of the foreground pixels."""
        ys, xs = np.nonzero(self.mask)
        return frozenset(zip((ys + self.y0).tolist(), (xs + self.x0).tolist()))

    def translated(self, dx: int, dy: int) -> "ComponentBox":
        return ComponentBox(
            x0=self.x0 + dx, y0=self.y0 + dy, x1=self.x1 + dx, y1=self.y1 + dy,
            area=self.area, centroid=(self.centroid[0] + dx, self.centroid[1] + dy),
            mask=self.mask,
        )


@dataclass(eq=False)
class SegmentedGlyph:
    """A cropped sign candidate with its place in the reading order."""

    crop: np.ndarray  # uint8, canonical_size x canonical_size
    box: ComponentBox
    column_index: int
    order_index: int


def _as_gray(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] in (3, 4):
        rgb = image[..., :3].astype(np.float64)
        return (rgb @ np.array([0.299, 0.587, 0.114])).astype(image.dtype)
    raise ValueError(f"expected a grayscale or RGB image, got shape {image.shape}")


def binarize_adaptive(gray: np.ndarray, window: int = 35, offset: float = 10.0) -> np.ndarray:
    """Foreground where intensity < local mean - offset (dark ink, light ground).

    The local mean is taken over a window x window neighbourhood with edge
    replication.
    """
    if gray.ndim != 2:
        raise ValueError("binarize_adaptive expects a single-channel image")
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    h, w = gray.shape
    # A single pixel degenerates to mean == pixel; the size check would
    # reject it spuriously.
    if window > h and window > w and gray.size > 1:
        raise ValueError(f"window {window} is larger than both image dimensions {gray.shape}")
    local_mean = ndimage.uniform_filter(gray.astype(np.float64), size=window, mode="nearest")
    return gray < local_mean - offset


def extract_components(binary: np.ndarray) -> list[ComponentBox]:
    """8-connected components of the foreground, sorted by (y0, x0)."""
    labels, count = ndimage.label(binary, structure=_EIGHT_CONNECTED)
    boxes: list[ComponentBox] = []
    for idx, sl in enumerate(ndimage.find_objects(labels, count), start=1):
        if sl is None:
            continue
        ys, xs = sl
        mask = labels[sl] == idx
        my, mx = np.nonzero(mask)
        boxes.append(
            ComponentBox(
                x0=xs.start, y0=ys.start, x1=xs.stop, y1=ys.stop,
                area=int(mask.sum()),
                centroid=(float(mx.mean() + xs.start), float(my.mean() + ys.start)),
                mask=mask,
            )
        )
    boxes.sort(key=lambda b: (b.y0, b.x0))
    return boxes


def filter_components(
    components: list[ComponentBox],
    min_area: int,
    max_area: int,
    min_dim: int,
    max_dim: int,
) -> list[ComponentBox]:
    """Keep components whose area and both bbox sides fall in the given bands."""
    return [
        c for c in components
        if min_area <= c.area <= max_area
        and min_dim <= c.width <= max_dim
        and min_dim <= c.height <= max_dim
    ]


def cluster_columns(
    components: list[ComponentBox],
    gap_factor: float = 2.0,
    direction: str = "ltr",
) -> list[list[ComponentBox]]:
    """Group components into vertical columns of the text layout.

    Components are sorted by centroid x; a new column starts wherever the gap
    between consecutive centroids exceeds gap_factor times the median
    component width.  Within a column the order is top to bottom.
    """
    if not components:
        return []
    if direction not in ("ltr", "rtl"):
        raise ValueError(f"direction must be 'ltr' or 'rtl', got {direction!r}")
    median_width = float(np.median([c.width for c in components]))
    threshold = gap_factor * median_width
    by_x = sorted(components, key=lambda c: c.centroid[0])
    columns: list[list[ComponentBox]] = [[by_x[0]]]
    for prev, cur in zip(by_x, by_x[1:]):
        if cur.centroid[0] - prev.centroid[0] > threshold:
            columns.append([cur])
        else:
            columns[-1].append(cur)
    for col in columns:
        col.sort(key=lambda c: (c.centroid[1], c.centroid[0]))
    if direction == "rtl":
        columns.reverse()
    return columns


def _square_crop(gray: np.ndarray, box: ComponentBox, config: SegmentationConfig) -> np.ndarray:
    h, w = gray.shape
    m = config.crop_margin
    x0, y0 = max(0, box.x0 - m), max(0, box.y0 - m)
    x1, y1 = min(w, box.x1 + m), min(h, box.y1 + m)
    crop = gray[y0:y1, x0:x1]
    ch, cw = crop.shape
    side = max(ch, cw)
    padded = np.full((side, side), config.pad_value, dtype=np.uint8)
    oy, ox = (side - ch) // 2, (side - cw) // 2
    padded[oy : oy + ch, ox : ox + cw] = crop
    im = Image.fromarray(padded).resize(
        (config.canonical_size, config.canonical_size), Image.BILINEAR
    )
    return np.asarray(im, dtype=np.uint8)


def segment_region(image: np.ndarray, config: SegmentationConfig | None = None) -> list[SegmentedGlyph]:
    """Full segmentation of one facsimile region into reading-ordered crops."""
    if config is None:
        config = SegmentationConfig()
    gray = _as_gray(image).astype(np.uint8)
    binary = binarize_adaptive(gray, config.window, config.offset)
    components = extract_components(binary)
    kept = filter_components(
        components, config.min_area, config.max_area, config.min_dim, config.max_dim
    )
    glyphs: list[SegmentedGlyph] = []
    for ci, column in enumerate(cluster_columns(kept, config.gap_factor, config.column_direction)):
        for oi, box in enumerate(column):
            glyphs.append(
                SegmentedGlyph(
                    crop=_square_crop(gray, box, config),
                    box=box,
                    column_index=ci,
                    order_index=oi,
                )
            )
    return glyphs


_OVERLAY_COLORS = [
    (220, 40, 40), (40, 130, 220), (40, 170, 60), (230, 150, 20),
    (150, 60, 200), (20, 170, 170), (200, 60, 130), (120, 120, 40),
]


def render_overlay(image: np.ndarray, glyphs: list[SegmentedGlyph], path: str | Path | None = None) -> Image.Image:
    """Debug view: bounding boxes coloured per column, labelled with indices."""
    im = Image.fromarray(_as_gray(image).astype(np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(im)
    for g in glyphs:
        color = _OVERLAY_COLORS[g.column_index % len(_OVERLAY_COLORS)]
        draw.rectangle([g.box.x0, g.box.y0, g.box.x1 - 1, g.box.y1 - 1], outline=color)
        draw.text((g.box.x0 + 1, max(0, g.box.y0 - 10)), f"{g.column_index}.{g.order_index}", fill=color)
    if path is not None:
        im.save(path)
    return im
