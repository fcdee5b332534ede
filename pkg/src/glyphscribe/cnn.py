"""End-to-end softmax CNN baseline trained with weighted categorical cross-entropy.

Same conv backbone family as the embedding encoder, followed by a 512-unit
rectified dense layer and a C-way softmax head.  Class weights counteract the
long-tailed label distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ClassWeightTable, LabeledSample
from .metric import preprocess_glyph, _to_model_space
from .nn import Adam, Conv2d, Dense, Flatten, MaxPool2, ReLU, Sequential
from .nn import TrainingHistory, TrainSchedule, run_training

PROB_FLOOR = 1e-12


@dataclass(eq=False)
class SoftmaxClassifierModel:
    net: Sequential
    classes: list[str]  # sorted lexicographically
    input_size: int
    channels: tuple[int, ...]
    hidden: int
    seed: int
    dtype: type = np.float32

    @classmethod
    def build(cls, classes: list[str], input_size: int = 32,
              channels: tuple[int, ...] = (8, 16, 32), hidden: int = 512,
              seed: int = 0, dtype=np.float32) -> "SoftmaxClassifierModel":
        if not classes:
            raise ValueError("class list must not be empty")
        if input_size % (2 ** len(channels)) != 0:
            raise ValueError(f"input_size {input_size} must be divisible by 2^{len(channels)}")
        rng = np.random.default_rng(seed)
        layers = []
        c_prev = 1
        for c in channels:
            layers += [Conv2d(c_prev, c, rng=rng, dtype=dtype), ReLU(), MaxPool2()]
            c_prev = c
        side = input_size // (2 ** len(channels))
        layers += [
            Flatten(),
            Dense(c_prev * side * side, hidden, rng=rng, dtype=dtype, relu_init=True),
            ReLU(),
            Dense(hidden, len(classes), rng=rng, dtype=dtype),
        ]
        return cls(net=Sequential(layers), classes=sorted(classes), input_size=input_size,
                   channels=tuple(channels), hidden=hidden, seed=seed, dtype=dtype)

    def logits(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        return self.net.forward(x.astype(self.dtype, copy=False), train=train)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _weight_vector(weights, class_order: list[str] | None) -> np.ndarray:
    if isinstance(weights, ClassWeightTable):
        if class_order is None:
            raise ValueError("class_order is required when weights is a ClassWeightTable")
        return weights.as_vector(class_order)
    return np.asarray(weights, dtype=np.float64)


def weighted_cross_entropy(probs: np.ndarray, one_hot: np.ndarray, weights,
                           class_order: list[str] | None = None) -> float:
    """Mean of -w_c * log(p) over the true classes, probabilities floored at 1e-12.

    ``weights`` is a ClassWeightTable (with ``class_order`` naming the
    columns) or a plain per-class weight vector.
    """
    probs = np.asarray(probs, dtype=np.float64)
    one_hot = np.asarray(one_hot, dtype=np.float64)
    if probs.shape != one_hot.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape} vs labels {one_hot.shape}")
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probability rows must sum to 1")
    if not (np.all((one_hot == 0) | (one_hot == 1)) and np.all(one_hot.sum(axis=1) == 1)):
        raise ValueError("labels must be one-hot rows")
    w = _weight_vector(weights, class_order)
    if w.shape != (probs.shape[1],):
        raise ValueError(f"weight vector length {w.shape} does not match {probs.shape[1]} classes")
    clipped = np.maximum(probs, PROB_FLOOR)
    return float(-(one_hot * w * np.log(clipped)).sum() / probs.shape[0])


def weighted_cross_entropy_from_logits(logits: np.ndarray, one_hot: np.ndarray,
                                       weight_vec: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and its analytic gradient w.r.t. the logits."""
    probs = softmax(np.asarray(logits, dtype=np.float64))
    one_hot = np.asarray(one_hot, dtype=np.float64)
    n = probs.shape[0]
    sample_w = one_hot @ weight_vec  # weight of each sample's true class
    loss = float(-(sample_w * np.log(np.maximum((probs * one_hot).sum(axis=1), PROB_FLOOR))).sum() / n)
    grad = sample_w[:, None] * (probs - one_hot) / n
    return loss, grad


def train_classifier(
    model: SoftmaxClassifierModel,
    train_samples: list[LabeledSample],
    val_samples: list[LabeledSample],
    weights: ClassWeightTable,
    schedule: TrainSchedule | None = None,
) -> tuple[SoftmaxClassifierModel, TrainingHistory]:
    """Minimize the weighted cross-entropy with Adam and early stopping."""
    if schedule is None:
        schedule = TrainSchedule()
    index = {c: i for i, c in enumerate(model.classes)}
    for s in train_samples + val_samples:
        if s.code not in index:
            raise ValueError(f"label {s.code!r} is not in the model's class list")

    def _arrays(samples):
        x = np.stack([preprocess_glyph(s.image, model.input_size) for s in samples])[:, None]
        onehot = np.zeros((len(samples), len(model.classes)))
        onehot[np.arange(len(samples)), [index[s.code] for s in samples]] = 1.0
        return x, onehot

    x_train, y_train = _arrays(train_samples)
    x_val, y_val = _arrays(val_samples)
    w = weights.as_vector(model.classes)
    rng = np.random.default_rng(schedule.seed)

    def val_loss_fn() -> float:
        logits = _batched_logits(model, x_val)
        loss, _ = weighted_cross_entropy_from_logits(logits, y_val, w)
        return loss

    def run_epoch(optimizer: Adam, epoch: int) -> float:
        order = rng.permutation(len(x_train))
        losses = []
        for i in range(0, len(order), schedule.batch_size):
            idx = order[i : i + schedule.batch_size]
            logits = model.logits(x_train[idx], train=True)
            loss, grad = weighted_cross_entropy_from_logits(logits, y_train[idx], w)
            losses.append(loss)
            model.net.backward(grad.astype(model.dtype))
            optimizer.step(model.net.param_pairs())
        return float(np.mean(losses))

    history = run_training(model.net, schedule, run_epoch, val_loss_fn)
    return model, history


def _batched_logits(model: SoftmaxClassifierModel, x: np.ndarray, batch: int = 512) -> np.ndarray:
    return np.concatenate([model.logits(x[i : i + batch]) for i in range(0, len(x), batch)])


def predict_classifier(model: SoftmaxClassifierModel, image: np.ndarray) -> tuple[str, float, np.ndarray]:
    """Predicted code, its softmax confidence, and the full distribution."""
    if not model.classes:
        raise ValueError("model has an empty class list")
    x = _to_model_space(image, model.input_size)[None, None]
    probs = softmax(model.logits(x).astype(np.float64))[0]
    idx = int(probs.argmax())  # classes sorted, first max = smaller code
    return model.classes[idx], float(probs[idx]), probs


def predict_classifier_batch(model: SoftmaxClassifierModel, images: list[np.ndarray]) -> list[tuple[str, float, np.ndarray]]:
    if not model.classes:
        raise ValueError("model has an empty class list")
    x = np.stack([preprocess_glyph(im, model.input_size) for im in images])[:, None]
    probs = softmax(_batched_logits(model, x).astype(np.float64))
    out = []
    for row in probs:
        idx = int(row.argmax())
        out.append((model.classes[idx], float(row[idx]), row))
    return out


def save_classifier(model: SoftmaxClassifierModel, path: str | Path) -> None:
    meta = json.dumps({
        "classes": model.classes, "input_size": model.input_size,
        "channels": list(model.channels), "hidden": model.hidden,
        "seed": model.seed, "dtype": np.dtype(model.dtype).name,
    })
    arrays = {f"p{i}": p for i, (p, _) in enumerate(model.net.param_pairs())}
    np.savez(path, meta=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **arrays)


def load_classifier(path: str | Path) -> SoftmaxClassifierModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if not meta["classes"]:
            raise ValueError("stored class list is empty")
        model = SoftmaxClassifierModel.build(
            classes=meta["classes"], input_size=meta["input_size"],
            channels=tuple(meta["channels"]), hidden=meta["hidden"],
            seed=meta["seed"], dtype=np.dtype(meta["dtype"]).type,
        )
        model.net.set_state([data[f"p{i}"] for i in range(len(model.net.param_pairs()))])
    return model
