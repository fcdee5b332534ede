"""Deep metric learning: embedding encoder, pair training, centroid classification.

An encoder maps a glyph raster to an L2-normalized d-vector.  It is trained
as a Siamese pair network under a cosine contrastive loss: positive pairs are
pulled toward similarity 1, negative pairs pushed below a margin.  Classes
are then represented by the plain mean of their training embeddings, and
inference is nearest-centroid by cosine similarity, which also allows
registering new classes from a handful of examples without retraining.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .corpus import LabeledSample
from .nn import Adam, Conv2d, Dense, Flatten, L2Normalize, MaxPool2, ReLU, Sequential
from .nn import TrainingHistory, TrainSchedule, run_training

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-3


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class MetricTrainConfig:
    margin: float = 0.5
    augment_probability: float = 0.5
    rotation_degrees: float = 15.0
    shift_fraction: float = 0.1
    mirror_axis: str = "horizontal"
    band_max_fraction: float = 0.12
    occlusion_max_fraction: float = 0.25
    pairs_per_epoch: int = 50_000
    positive_fraction: float = 0.5
    val_pairs: int = 2_000
    batch_pairs: int = 128
    learning_rate: float = 1e-3
    max_epochs: int = 60
    patience: int = 8
    lr_patience: int = 4
    lr_factor: float = 0.5
    min_delta: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.margin < 1:
            raise ValueError(f"margin must be in [0, 1), got {self.margin}")
        if self.mirror_axis != "horizontal":
            # vertical flips can turn a sign into a different (or invalid) one
            raise ValueError(f"mirror_axis must be 'horizontal', got {self.mirror_axis!r}")
        if not 0 <= self.augment_probability <= 1:
            raise ValueError("augment_probability must be in [0, 1]")
        if not 0 < self.positive_fraction <= 1:
            raise ValueError("positive_fraction must be in (0, 1]")

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            lr_patience=self.lr_patience,
            lr_factor=self.lr_factor,
            min_delta=self.min_delta,
            batch_size=self.batch_pairs,
            seed=self.seed,
        )


# ---------------------------------------------------------------------------
# encoder

@dataclass(eq=False)
class EncoderModel:
    """Conv backbone -> flatten -> dense(d) -> L2 normalization."""

    net: Sequential
    input_size: int
    embed_dim: int
    channels: tuple[int, ...]
    seed: int
    dtype: type = np.float32

    @classmethod
    def build(cls, input_size: int = 32, channels: tuple[int, ...] = (8, 16, 32),
              embed_dim: int = 128, seed: int = 0, dtype=np.float32) -> "EncoderModel":
        if input_size % (2 ** len(channels)) != 0:
            raise ValueError(
                f"input_size {input_size} must be divisible by 2^{len(channels)}"
            )
        rng = np.random.default_rng(seed)
        layers = []
        c_prev = 1
        for c in channels:
            layers += [Conv2d(c_prev, c, rng=rng, dtype=dtype), ReLU(), MaxPool2()]
            c_prev = c
        side = input_size // (2 ** len(channels))
        layers += [
            Flatten(),
            Dense(c_prev * side * side, embed_dim, rng=rng, dtype=dtype),
            L2Normalize(),
        ]
        return cls(net=Sequential(layers), input_size=input_size, embed_dim=embed_dim,
                   channels=tuple(channels), seed=seed, dtype=dtype)

    def embed_batch(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Embed preprocessed inputs of shape (N, 1, input_size, input_size)."""
        return self.net.forward(x.astype(self.dtype, copy=False), train=train)

    def fingerprint(self) -> str:
        arch = json.dumps({
            "input_size": self.input_size, "embed_dim": self.embed_dim,
            "channels": list(self.channels),
        }).encode()
        return hashlib.sha256(arch + self.net.weight_bytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray

    def __post_init__(self):
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"embedding norm {norm} deviates from 1 by more than 1e-5")


def preprocess_glyph(image: np.ndarray, input_size: int) -> np.ndarray:
    """Raster (any size, light background) -> float32 [0,1] ink-positive square."""
    arr = np.asarray(image)
    h, w = arr.shape[:2]
    if arr.ndim == 3:
        arr = (arr[..., :3].astype(np.float64) @ np.array([0.299, 0.587, 0.114]))
    if arr.dtype != np.uint8:
        arr = np.clip(arr, 0, 255).astype(np.uint8) if arr.max() > 1.5 else (arr * 255).astype(np.uint8)
    if h != w:
        side = max(h, w)
        padded = np.full((side, side), 255, dtype=np.uint8)
        oy, ox = (side - h) // 2, (side - w) // 2
        padded[oy : oy + h, ox : ox + w] = arr
        arr = padded
    if arr.shape != (input_size, input_size):
        arr = np.asarray(
            Image.fromarray(arr).resize((input_size, input_size), Image.BILINEAR),
            dtype=np.uint8,
        )
    return (1.0 - arr.astype(np.float32) / 255.0)


def _to_model_space(image: np.ndarray, input_size: int) -> np.ndarray:
    if image.shape != (input_size, input_size):
        raise ValueError(
            f"expected a {input_size}x{input_size} raster, got shape {image.shape}; "
            "preprocess_glyph resizes arbitrary crops"
        )
    if image.dtype == np.uint8:
        return 1.0 - image.astype(np.float32) / 255.0
    return 1.0 - image.astype(np.float32)


def embed(encoder: EncoderModel, image: np.ndarray) -> Embedding:
    """Embed one glyph raster already at the encoder's input size."""
    x = _to_model_space(image, encoder.input_size)[None, None]
    return Embedding(vector=encoder.embed_batch(x)[0].astype(np.float64))


def embed_many(encoder: EncoderModel, images: list[np.ndarray], batch: int = 256) -> np.ndarray:
    """Embeddings for arbitrary-size glyph rasters, preprocessed and batched."""
    x = np.stack([preprocess_glyph(im, encoder.input_size) for im in images])[:, None]
    out = [encoder.embed_batch(x[i : i + batch]) for i in range(0, len(x), batch)]
    return np.concatenate(out).astype(np.float64)


# ---------------------------------------------------------------------------
# loss

def contrastive_loss(s, y, margin: float = 0.5):
    """Cosine contrastive loss: (1-y)(1-s)^2 + y*max(s-margin, 0)^2.

    ``y`` is 0 for same-class pairs and 1 for different-class pairs; ``s`` is
    the cosine similarity of the pair's embeddings.  Vectorized.
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return (1 - y) * (1 - s) ** 2 + y * np.maximum(s - margin, 0.0) ** 2


def contrastive_loss_grad_s(s, y, margin: float = 0.5):
    """dL/ds for the contrastive loss."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return -2 * (1 - y) * (1 - s) + 2 * y * np.maximum(s - margin, 0.0)


def pair_loss_and_grad(a: np.ndarray, b: np.ndarray, y, margin: float = 0.5):
    """Loss and analytic gradients w.r.t. the raw (unnormalized) vectors.

    Cosine similarity s = a.b / (||a|| ||b||) feeds the contrastive loss;
    returns (loss, dL/da, dL/db).  Accepts single vectors or (N, d) batches.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a, b = a[None], b[None]
        y = np.asarray([y])
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    ah, bh = a / na, b / nb
    s = np.sum(ah * bh, axis=1)
    loss = contrastive_loss(s, y, margin)
    dls = contrastive_loss_grad_s(s, y, margin)[:, None]
    da = dls * (bh - s[:, None] * ah) / na
    db = dls * (ah - s[:, None] * bh) / nb
    if single:
        return float(loss[0]), da[0], db[0]
    return loss, da, db


# ---------------------------------------------------------------------------
# augmentation and pair sampling

def augment(image: np.ndarray, config: MetricTrainConfig, rng: np.random.Generator) -> np.ndarray:
    """Randomly perturb a training glyph; identity with prob 1 - augment_probability.

    The composition draws from rotation, shift, horizontal mirror, border
    band and circular occlusion.  Vertical flips are never produced.
    """
    if rng.random() >= config.augment_probability:
        return image
    h, w = image.shape
    ops = rng.random(5) < 0.5
    if not ops.any():
        ops[0] = True
    out = image.astype(np.float64)
    if ops[2]:  # horizontal mirror (left-right flip)
        out = out[:, ::-1]
    if ops[0]:
        angle = rng.uniform(-config.rotation_degrees, config.rotation_degrees)
        out = ndimage.rotate(out, angle, reshape=False, order=1, mode="constant", cval=255.0)
    if ops[1]:
        dy = rng.integers(-int(config.shift_fraction * h), int(config.shift_fraction * h) + 1)
        dx = rng.integers(-int(config.shift_fraction * w), int(config.shift_fraction * w) + 1)
        out = ndimage.shift(out, (dy, dx), order=0, mode="constant", cval=255.0)
    if ops[3]:  # dark band along one border
        side = rng.integers(4)
        width = int(rng.integers(1, max(2, int(config.band_max_fraction * (h if side < 2 else w)))))
        if side == 0:
            out[:width, :] = 0.0
        elif side == 1:
            out[-width:, :] = 0.0
        elif side == 2:
            out[:, :width] = 0.0
        else:
            out[:, -width:] = 0.0
    if ops[4]:  # circular occlusion: darkened patch or missing strokes
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        radius = rng.uniform(2, max(2.5, config.occlusion_max_fraction * min(h, w) / 2))
        ys, xs = np.ogrid[:h, :w]
        disk = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2
        out[disk] = 0.0 if rng.random() < 0.5 else 255.0
    return np.clip(out, 0, 255).astype(np.uint8)


@dataclass(eq=False)
class PairSample:
    image_a: np.ndarray
    image_b: np.ndarray
    y: int  # 0 = same class, 1 = different class


def sample_pairs(
    samples: list[LabeledSample],
    count: int,
    positive_fraction: float,
    rng: np.random.Generator,
    augment_config: MetricTrainConfig | None = None,
) -> list[PairSample]:
    """Draw training pairs; roughly ``positive_fraction`` of them same-class.

    Positive anchors come only from classes with at least two samples.  Both
    images pass through ``augment`` when a config is given.
    """
    by_code: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        by_code.setdefault(s.code, []).append(i)
    codes = sorted(by_code)
    pos_codes = [c for c in codes if len(by_code[c]) >= 2]
    if len(codes) < 2 and positive_fraction < 1:
        raise ValueError("need at least 2 classes to sample negative pairs")
    if positive_fraction > 0 and not pos_codes:
        raise ValueError("no class has >= 2 samples; cannot sample positive pairs")

    def _maybe_augment(img: np.ndarray) -> np.ndarray:
        return augment(img, augment_config, rng) if augment_config is not None else img

    pairs = []
    for _ in range(count):
        if rng.random() < positive_fraction:
            code = pos_codes[rng.integers(len(pos_codes))]
            ia, ib = rng.choice(by_code[code], size=2, replace=False)
            y = 0
        else:
            ca, cb = rng.choice(len(codes), size=2, replace=False)
            ia = by_code[codes[ca]][rng.integers(len(by_code[codes[ca]]))]
            ib = by_code[codes[cb]][rng.integers(len(by_code[codes[cb]]))]
            y = 1
        pairs.append(PairSample(
            image_a=_maybe_augment(samples[ia].image),
            image_b=_maybe_augment(samples[ib].image),
            y=y,
        ))
    return pairs


# ---------------------------------------------------------------------------
# training

def _stack_preprocessed(images: list[np.ndarray], input_size: int) -> np.ndarray:
    if all(im.shape == (input_size, input_size) and im.dtype == np.uint8 for im in images):
        return (1.0 - np.stack(images).astype(np.float32) / 255.0)[:, None]
    return np.stack([preprocess_glyph(im, input_size) for im in images])[:, None]


def _pairs_to_arrays(pairs: list[PairSample], input_size: int):
    a = _stack_preprocessed([p.image_a for p in pairs], input_size)
    b = _stack_preprocessed([p.image_b for p in pairs], input_size)
    y = np.array([p.y for p in pairs], dtype=np.float64)
    return a, b, y


def _resized_copies(samples: list[LabeledSample], input_size: int) -> list[LabeledSample]:
    """Pre-resize once so per-pair augmentation runs at the encoder's input size."""
    out = []
    for s in samples:
        img = s.image
        if img.shape != (input_size, input_size) or img.dtype != np.uint8:
            img = np.asarray(
                Image.fromarray(img).resize((input_size, input_size), Image.BILINEAR),
                dtype=np.uint8,
            )
        out.append(LabeledSample(image=img, code=s.code, page_id=s.page_id, sample_id=s.sample_id))
    return out


def train_encoder(
    encoder: EncoderModel,
    train_samples: list[LabeledSample],
    val_samples: list[LabeledSample],
    config: MetricTrainConfig | None = None,
) -> tuple[EncoderModel, TrainingHistory]:
    """Siamese training of the shared encoder on dynamically sampled pairs.

    One encoder is applied to both pair members; validation pairs are sampled
    once, without augmentation, and reused every epoch.  Early stopping and
    learning-rate reduction follow the shared schedule; the weights of the
    best validation epoch are restored.
    """
    if config is None:
        config = MetricTrainConfig()
    rng = np.random.default_rng(config.seed)
    val_rng = np.random.default_rng(config.seed + 1)
    train_samples = _resized_copies(train_samples, encoder.input_size)
    val_samples = _resized_copies(val_samples, encoder.input_size)
    val_pairs = sample_pairs(val_samples, config.val_pairs, config.positive_fraction, val_rng)
    va, vb, vy = _pairs_to_arrays(val_pairs, encoder.input_size)

    def val_loss_fn() -> float:
        za = _batched_forward(encoder, va)
        zb = _batched_forward(encoder, vb)
        s = np.sum(za * zb, axis=1)
        return float(np.mean(contrastive_loss(s, vy, config.margin)))

    def run_epoch(optimizer: Adam, epoch: int) -> float:
        pairs = sample_pairs(
            train_samples, config.pairs_per_epoch, config.positive_fraction, rng,
            augment_config=config,
        )
        a, b, y = _pairs_to_arrays(pairs, encoder.input_size)
        losses = []
        for i in range(0, len(pairs), config.batch_pairs):
            ab = np.concatenate([a[i : i + config.batch_pairs], b[i : i + config.batch_pairs]])
            yb = y[i : i + config.batch_pairs]
            n = len(yb)
            z = encoder.embed_batch(ab, train=True)
            za, zb = z[:n], z[n:]
            s = np.sum(za * zb, axis=1)
            losses.append(float(np.mean(contrastive_loss(s, yb, config.margin))))
            dls = (contrastive_loss_grad_s(s, yb, config.margin) / n)[:, None]
            dz = np.concatenate([dls * zb, dls * za]).astype(encoder.dtype)
            encoder.net.backward(dz)
            optimizer.step(encoder.net.param_pairs())
        return float(np.mean(losses))

    history = run_training(encoder.net, config.schedule(), run_epoch, val_loss_fn)
    return encoder, history


def _batched_forward(encoder: EncoderModel, x: np.ndarray, batch: int = 512) -> np.ndarray:
    return np.concatenate(
        [encoder.embed_batch(x[i : i + batch]) for i in range(0, len(x), batch)]
    ).astype(np.float64)


# ---------------------------------------------------------------------------
# centroids

@dataclass(frozen=True, eq=False)
class CentroidEntry:
    vector: np.ndarray  # d-vector, NOT re-normalized
    support: int


@dataclass(eq=False)
class CentroidTable:
    entries: dict[str, CentroidEntry]
    encoder_fingerprint: str

    def codes(self) -> list[str]:
        return sorted(self.entries)

    def is_degenerate(self, code: str) -> bool:
        return float(np.linalg.norm(self.entries[code].vector)) < DEGENERATE_NORM

    def degenerate_codes(self) -> list[str]:
        return [c for c in self.codes() if self.is_degenerate(c)]


@dataclass(frozen=True)
class MetricPrediction:
    code: str
    similarity: float
    runner_up: tuple[str, float] | None
    rejected: bool = False


def compute_centroids(encoder: EncoderModel, samples: list[LabeledSample]) -> CentroidTable:
    """Per-class mean of unit embeddings (Eq. of the classifier template).

    Centroids are stored unnormalized; similarity divides by their norm at
    query time.  Near-zero centroids are kept but flagged degenerate.
    """
    if not samples:
        raise ValueError("cannot compute centroids from an empty sample set")
    by_code: dict[str, list[np.ndarray]] = {}
    for s in samples:
        by_code.setdefault(s.code, []).append(s.image)
    entries = {}
    for code in sorted(by_code):
        z = embed_many(encoder, by_code[code])
        entries[code] = CentroidEntry(vector=z.mean(axis=0), support=len(z))
    table = CentroidTable(entries=entries, encoder_fingerprint=encoder.fingerprint())
    for code in table.degenerate_codes():
        log.warning("centroid for %s is degenerate (norm < %g)", code, DEGENERATE_NORM)
    return table


def _similarities(z: np.ndarray, table: CentroidTable, codes: list[str]) -> np.ndarray:
    c = np.stack([table.entries[code].vector for code in codes])
    norms = np.linalg.norm(c, axis=1)
    return (c @ z) / norms


def classify_nearest_centroid(
    embedding: Embedding | np.ndarray,
    table: CentroidTable,
    reject_below: float | None = None,
) -> MetricPrediction:
    """Highest-cosine-similarity centroid, ties to the smaller code.

    Degenerate centroids are excluded.  With ``reject_below``, predictions
    under the similarity floor are flagged rejected ("unknown").
    """
    z = embedding.vector if isinstance(embedding, Embedding) else np.asarray(embedding, dtype=np.float64)
    codes = [c for c in table.codes() if not table.is_degenerate(c)]
    if not codes:
        raise ValueError("all centroids are degenerate; nothing to classify against")
    sims = _similarities(z, table, codes)
    order = np.argsort(-sims, kind="stable")  # stable keeps lexicographic tie-break
    best = int(order[0])
    runner = (codes[int(order[1])], float(sims[order[1]])) if len(codes) > 1 else None
    sim = float(sims[best])
    return MetricPrediction(
        code=codes[best],
        similarity=sim,
        runner_up=runner,
        rejected=reject_below is not None and sim < reject_below,
    )


def classify_batch(embeddings: np.ndarray, table: CentroidTable) -> list[MetricPrediction]:
    """Vectorized nearest-centroid over (N, d) embeddings."""
    codes = [c for c in table.codes() if not table.is_degenerate(c)]
    if not codes:
        raise ValueError("all centroids are degenerate; nothing to classify against")
    c = np.stack([table.entries[code].vector for code in codes])
    sims = embeddings @ (c / np.linalg.norm(c, axis=1, keepdims=True)).T
    preds = []
    for row in sims:
        order = np.argsort(-row, kind="stable")
        runner = (codes[int(order[1])], float(row[order[1]])) if len(codes) > 1 else None
        preds.append(MetricPrediction(codes[int(order[0])], float(row[order[0]]), runner))
    return preds


def register_class(
    table: CentroidTable,
    code: str,
    images: list[np.ndarray],
    encoder: EncoderModel,
    overwrite: bool = False,
) -> CentroidTable:
    """New centroid from example images; no weights change, old entries untouched."""
    if not images:
        raise ValueError("register_class needs at least one image")
    if code in table.entries and not overwrite:
        raise ValueError(f"class {code!r} already registered (pass overwrite=True to replace)")
    if table.encoder_fingerprint != encoder.fingerprint():
        raise ValueError("centroid table was built with a different encoder")
    z = embed_many(encoder, images)
    entries = dict(table.entries)
    entries[code] = CentroidEntry(vector=z.mean(axis=0), support=len(z))
    return CentroidTable(entries=entries, encoder_fingerprint=table.encoder_fingerprint)


# ---------------------------------------------------------------------------
# persistence

def save_encoder(encoder: EncoderModel, path: str | Path) -> None:
    meta = json.dumps({
        "input_size": encoder.input_size,
        "embed_dim": encoder.embed_dim,
        "channels": list(encoder.channels),
        "seed": encoder.seed,
        "dtype": np.dtype(encoder.dtype).name,
    })
    arrays = {f"p{i}": p for i, (p, _) in enumerate(encoder.net.param_pairs())}
    np.savez(path, meta=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **arrays)


def load_encoder(path: str | Path) -> EncoderModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        encoder = EncoderModel.build(
            input_size=meta["input_size"], channels=tuple(meta["channels"]),
            embed_dim=meta["embed_dim"], seed=meta["seed"],
            dtype=np.dtype(meta["dtype"]).type,
        )
        encoder.net.set_state([data[f"p{i}"] for i in range(len(encoder.net.param_pairs()))])
    return encoder


def save_centroids(table: CentroidTable, path: str | Path) -> None:
    codes = table.codes()
    np.savez(
        path,
        codes=np.array(codes),
        vectors=np.stack([table.entries[c].vector for c in codes]) if codes else np.zeros((0, 0)),
        supports=np.array([table.entries[c].support for c in codes], dtype=np.int64),
        fingerprint=np.array(table.encoder_fingerprint),
    )


def load_centroids(path: str | Path, encoder: EncoderModel | None = None) -> CentroidTable:
    """Load a table, refusing one whose encoder fingerprint mismatches."""
    with np.load(path) as data:
        fingerprint = str(data["fingerprint"])
        if encoder is not None and fingerprint != encoder.fingerprint():
            raise ValueError(
                f"centroid table fingerprint {fingerprint} does not match the "
                f"loaded encoder ({encoder.fingerprint()})"
            )
        entries = {
            str(code): CentroidEntry(vector=vec, support=int(sup))
            for code, vec, sup in zip(data["codes"], data["vectors"], data["supports"])
        }
    return CentroidTable(entries=entries, encoder_fingerprint=fingerprint)


def centroids_to_csv(table: CentroidTable, path: str | Path) -> None:
    codes = table.codes()
    dim = len(next(iter(table.entries.values())).vector) if codes else 0
    lines = ["code,support," + ",".join(f"c{i}" for i in range(dim))]
    for code in codes:
        e = table.entries[code]
        lines.append(f"{code},{e.support}," + ",".join(f"{v:.8g}" for v in e.vector))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
