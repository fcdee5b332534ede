"""Dataset ingestion, split management and class-weight computation.

A dataset on disk is one directory per Gardiner code, each holding raster
files (``<root>/<CODE>/<file>.png``).  An optional ``manifest.csv`` with
columns ``path,page_id`` attaches source-page identifiers, which drive the
held-out-page split.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .codes import validate_code

log = logging.getLogger(__name__)

RASTER_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff"}


@dataclass(eq=False)
class LabeledSample:
    """One labelled glyph raster at the canonical size."""

    image: np.ndarray  # uint8 grayscale, canonical_size x canonical_size
    code: str
    page_id: str | None
    sample_id: str


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint sample-id sets covering the whole corpus."""

    train: frozenset[str]
    validation: frozenset[str]
    test_random: frozenset[str]
    test_pages: frozenset[str]
    seed: int
    ratios: tuple[float, float, float]

    def to_json(self) -> str:
        doc = {
            "train": sorted(self.train),
            "validation": sorted(self.validation),
            "test_random": sorted(self.test_random),
            "test_pages": sorted(self.test_pages),
            "seed": self.seed,
            "ratios": list(self.ratios),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        doc = json.loads(text)
        return cls(
            train=frozenset(doc["train"]),
            validation=frozenset(doc["validation"]),
            test_random=frozenset(doc["test_random"]),
            test_pages=frozenset(doc["test_pages"]),
            seed=int(doc["seed"]),
            ratios=tuple(float(r) for r in doc["ratios"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetSplit":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ClassWeightTable:
    """Per-class loss weights, non-increasing in class frequency."""

    weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for code, w in self.weights.items():
            if not w > 0:
                raise ValueError(f"class weight for {code!r} must be positive, got {w}")

    def __getitem__(self, code: str) -> float:
        return self.weights[code]

    def as_vector(self, class_order: list[str]) -> np.ndarray:
        return np.array([self.weights[c] for c in class_order], dtype=np.float64)


def _read_manifest(root: Path) -> dict[str, str]:
    manifest = root / "manifest.csv"
    if not manifest.exists():
        return {}
    pages: dict[str, str] = {}
    with manifest.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            pages[row["path"]] = row["page_id"]
    return pages


def load_dataset(root: str | Path, canonical_size: int = 100) -> list[LabeledSample]:
    """Load all samples under ``root``, resized to canonical_size.

    Directory names are the class codes and must match the Gardiner pattern.
    Unreadable files are skipped with a warning; ordering is lexicographic by
    path so repeated loads are identical.
    """
    root = Path(root)
    pages = _read_manifest(root)
    samples: list[LabeledSample] = []
    skipped = 0
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            code = validate_code(class_dir.name)
        except ValueError:
            raise ValueError(
                f"directory name is not a valid Gardiner code: {class_dir.name!r}"
            ) from None
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() not in RASTER_SUFFIXES:
                continue
            try:
                with Image.open(path) as im:
                    img = im.convert("L").resize(
                        (canonical_size, canonical_size), Image.BILINEAR
                    )
                arr = np.asarray(img, dtype=np.uint8)
            except Exception as exc:
                log.warning("skipping unreadable file %s: %s", path, exc)
                skipped += 1
                continue
            rel = path.relative_to(root).as_posix()
            samples.append(
                LabeledSample(
                    image=arr,
                    code=code,
                    page_id=pages.get(rel),
                    sample_id=rel,
                )
            )
    if skipped:
        log.warning("skipped %d unreadable file(s) under %s", skipped, root)
    if not samples:
        raise ValueError(f"no samples found under {root}")
    return samples


def make_splits(
    samples: list[LabeledSample],
    ratios: tuple[float, float, float],
    held_out_pages: set[str] | frozenset[str] = frozenset(),
    seed: int = 0,
) -> DatasetSplit:
    """Stratified train/validation/test split with held-out pages.

    Samples from ``held_out_pages`` all go to ``test_pages``.  The remainder
    is split per class: ratio quotas are floored and the leftover samples go
    to the splits with the largest fractional quota, ties favouring train.
    Every split therefore stays within one sample of its exact quota.
    Deterministic for a fixed seed.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative, got {ratios}")

    test_pages = {
        s.sample_id for s in samples if s.page_id is not None and s.page_id in held_out_pages
    }
    by_class: dict[str, list[str]] = {}
    for s in samples:
        if s.sample_id in test_pages:
            continue
        by_class.setdefault(s.code, []).append(s.sample_id)

    rng = np.random.default_rng(seed)
    parts = sum(1 for r in ratios if r > 0)
    train: list[str] = []
    val: list[str] = []
    test: list[str] = []
    for code in sorted(by_class):
        ids = sorted(by_class[code])
        rng.shuffle(ids)
        n = len(ids)
        if n < parts:
            log.warning(
                "class %s has %d non-held-out sample(s), fewer than %d split parts; "
                "assigning all to train",
                code, n, parts,
            )
            train.extend(ids)
            continue
        quotas = [n * r for r in ratios]
        counts = [int(q) for q in quotas]
        leftovers = n - sum(counts)
        by_fraction = sorted(range(3), key=lambda i: (counts[i] - quotas[i], i))
        for i in by_fraction[:leftovers]:
            counts[i] += 1
        n_train, n_val, _ = counts
        train.extend(ids[:n_train])
        val.extend(ids[n_train : n_train + n_val])
        test.extend(ids[n_train + n_val :])

    return DatasetSplit(
        train=frozenset(train),
        validation=frozenset(val),
        test_random=frozenset(test),
        test_pages=frozenset(test_pages),
        seed=seed,
        ratios=tuple(ratios),
    )


def class_frequencies(samples: list[LabeledSample]) -> dict[str, int]:
    """Exact per-code sample counts."""
    return dict(Counter(s.code for s in samples))


def class_weights(frequencies: dict[str, int]) -> ClassWeightTable:
    """Balanced weights w_c = N / (C * n_c).

    The frequency-weighted mean of the weights is 1, so a weighted loss keeps
    the magnitude of its unweighted counterpart.
    """
    if not frequencies:
        return ClassWeightTable({})
    for code, n in frequencies.items():
        if n <= 0:
            raise ValueError(f"class {code!r} has non-positive count {n}")
    total = sum(frequencies.values())
    c = len(frequencies)
    return ClassWeightTable(
        {code: total / (c * n) for code, n in frequencies.items()}
    )


def select_samples(samples: list[LabeledSample], ids: frozenset[str] | set[str]) -> list[LabeledSample]:
    """Subset of ``samples`` whose ids are in ``ids``, original order kept."""
    return [s for s in samples if s.sample_id in ids]
