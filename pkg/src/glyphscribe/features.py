"""Handcrafted visual features: HOG plus axis and diagonal projection profiles.

Every segment of the concatenated vector is normalized independently, so each
contributes on a comparable scale regardless of image intensity range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureConfig:
    hog_bins: int = 12
    hog_cell: int = 5
    hog_cells_per_block: int = 1


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered (name, offset, length) of the segments in a feature vector."""

    segments: tuple[tuple[str, int, int], ...]

    @property
    def dim(self) -> int:
        return sum(length for _, _, length in self.segments)

    def slice_of(self, name: str) -> slice:
        for seg_name, offset, length in self.segments:
            if seg_name == name:
                return slice(offset, offset + length)
        raise KeyError(name)


@dataclass(eq=False)
class FeatureVector:
    values: np.ndarray
    layout: FeatureLayout

    def segment(self, name: str) -> np.ndarray:
        return self.values[self.layout.slice_of(name)]


def _gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # central differences inside, one-sided at the borders
    gy, gx = np.gradient(gray.astype(np.float64))
    return gx, gy


def hog_descriptor(
    gray: np.ndarray,
    bins: int = 12,
    cell: int = 5,
    cells_per_block: int = 1,
) -> np.ndarray:
    """Histogram of oriented gradients with Hellinger block normalization.

    Unsigned orientations over [0, 180) degrees, per-cell magnitude
    histograms, sqrt(v / ||v||_1) per block, then the full descriptor divided
    by its maximum absolute value.  A zero descriptor is returned unchanged.
    """
    gray = np.asarray(gray, dtype=np.float64)
    h, w = gray.shape
    if h % cell or w % cell:
        raise ValueError(
            f"image dimensions {gray.shape} are not divisible by cell={cell}; "
            f"pad to ({-(-h // cell) * cell}, {-(-w // cell) * cell})"
        )
    gx, gy = _gradients(gray)
    magnitude = np.hypot(gx, gy)
    orientation = np.mod(np.arctan2(gy, gx), np.pi)  # unsigned, [0, pi)
    bin_idx = np.minimum((orientation / np.pi * bins).astype(np.int64), bins - 1)

    rows, cols = h // cell, w // cell
    ys, xs = np.indices(gray.shape)
    hist = np.zeros((rows, cols, bins), dtype=np.float64)
    np.add.at(hist, (ys // cell, xs // cell, bin_idx), magnitude)

    b = cells_per_block
    if b == 1:
        blocks = hist[:, :, None, None, :]
    else:
        br, bc = rows - b + 1, cols - b + 1
        blocks = np.empty((br, bc, b, b, bins), dtype=np.float64)
        for i in range(br):
            for j in range(bc):
                blocks[i, j] = hist[i : i + b, j : j + b]
    sums = blocks.sum(axis=(2, 3, 4), keepdims=True)
    normed = np.sqrt(np.divide(blocks, sums, out=np.zeros_like(blocks), where=sums > 0))
    descriptor = normed.ravel()
    peak = np.abs(descriptor).max()
    if peak > 0:
        descriptor = descriptor / peak
    return descriptor


def projection_features(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Axis and diagonal intensity profiles, each normalized by its maximum.

    Returns (proj_x, proj_y, diag_main, diag_anti) of lengths (W, H, H+W-1,
    H+W-1).  Diagonal sums cover every offset; all-zero profiles stay zero.
    """
    gray = np.asarray(gray, dtype=np.float64)
    h, w = gray.shape
    proj_x = gray.sum(axis=0)
    proj_y = gray.sum(axis=1)
    ys, xs = np.indices(gray.shape)
    diag_main = np.bincount((xs - ys + h - 1).ravel(), weights=gray.ravel(), minlength=h + w - 1)
    diag_anti = np.bincount((xs + ys).ravel(), weights=gray.ravel(), minlength=h + w - 1)

    def _norm(v: np.ndarray) -> np.ndarray:
        peak = v.max()
        return v / peak if peak > 0 else v

    return _norm(proj_x), _norm(proj_y), _norm(diag_main), _norm(diag_anti)


def extract_features(image: np.ndarray, config: FeatureConfig | None = None) -> FeatureVector:
    """Concatenate (hog, proj_x, proj_y, diag_main, diag_anti) with a recorded layout."""
    if config is None:
        config = FeatureConfig()
    gray = np.asarray(image, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray[..., :3] @ np.array([0.299, 0.587, 0.114])
    hog = hog_descriptor(gray, config.hog_bins, config.hog_cell, config.hog_cells_per_block)
    px, py, dm, da = projection_features(gray)
    parts = [("hog", hog), ("proj_x", px), ("proj_y", py), ("diag_main", dm), ("diag_anti", da)]
    segments = []
    offset = 0
    for name, vec in parts:
        segments.append((name, offset, len(vec)))
        offset += len(vec)
    return FeatureVector(
        values=np.concatenate([vec for _, vec in parts]),
        layout=FeatureLayout(segments=tuple(segments)),
    )


def expected_layout(image_size: int, config: FeatureConfig | None = None) -> FeatureLayout:
    """Layout the extractor would produce for a square image of ``image_size``."""
    if config is None:
        config = FeatureConfig()
    cells = image_size // config.hog_cell
    b = config.hog_cells_per_block
    hog_len = (cells - b + 1) ** 2 * b * b * config.hog_bins
    diag_len = 2 * image_size - 1
    lens = [("hog", hog_len), ("proj_x", image_size), ("proj_y", image_size),
            ("diag_main", diag_len), ("diag_anti", diag_len)]
    segments = []
    offset = 0
    for name, length in lens:
        segments.append((name, offset, length))
        offset += length
    return FeatureLayout(segments=tuple(segments))
