"""Class-weighted linear SVM over the handcrafted feature vectors.

One-vs-rest hinge-loss classifiers (liblinear via scikit-learn), with the
regularization strength picked on the validation split by balanced accuracy.
The trained model is a plain weight matrix; prediction is an argmax of the
per-class decision values with lexicographic tie-breaking.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.svm import LinearSVC

from .corpus import ClassWeightTable
from .features import FeatureLayout, FeatureVector

log = logging.getLogger(__name__)

DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0)


@dataclass(eq=False)
class LinearClassifierModel:
    classes: list[str]  # sorted lexicographically
    coefs: np.ndarray  # (C, m)
    intercepts: np.ndarray  # (C,)
    layout: FeatureLayout
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if list(self.classes) != sorted(self.classes):
            order = np.argsort(self.classes)
            self.classes = [self.classes[i] for i in order]
            self.coefs = self.coefs[order]
            self.intercepts = self.intercepts[order]

    def decision_values(self, values: np.ndarray) -> np.ndarray:
        return values @ self.coefs.T + self.intercepts


def _as_matrix(features: list[FeatureVector]) -> tuple[np.ndarray, FeatureLayout]:
    layout = features[0].layout
    for f in features[1:]:
        if f.layout != layout:
            raise ValueError("feature vectors have mismatched layouts")
    return np.stack([f.values for f in features]), layout


def _fit_ovr(X, labels, classes, sample_weight, c, max_iter=10000):
    coefs = np.zeros((len(classes), X.shape[1]))
    intercepts = np.zeros(len(classes))
    for i, code in enumerate(classes):
        y = np.where(np.asarray(labels) == code, 1, -1)
        clf = LinearSVC(C=c, loss="hinge", max_iter=max_iter, tol=1e-4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # liblinear convergence chatter
            clf.fit(X, y, sample_weight=sample_weight)
        sign = 1.0 if clf.classes_[1] == 1 else -1.0
        coefs[i] = sign * clf.coef_[0]
        intercepts[i] = sign * clf.intercept_[0]
    return coefs, intercepts


def _balanced_accuracy(y_true, y_pred) -> float:
    recalls = []
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    for code in np.unique(y_true):
        mask = y_true == code
        recalls.append(np.mean(y_pred[mask] == code))
    return float(np.mean(recalls))


def train_svm(
    features: list[FeatureVector],
    labels: list[str],
    weights: ClassWeightTable,
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
    val_features: list[FeatureVector] | None = None,
    val_labels: list[str] | None = None,
) -> tuple[LinearClassifierModel, dict[float, float]]:
    """Fit the one-vs-rest model, sweeping C on the validation split.

    Returns the model trained at the best C together with the validation
    balanced accuracy for every swept value.  Without a validation split the
    sweep is skipped and the first grid value is used.
    """
    X, layout = _as_matrix(features)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError(f"need at least 2 classes to train, got {classes}")
    if len(X) != len(labels):
        raise ValueError("features and labels differ in length")
    if np.allclose(X.var(axis=0), 0):
        warnings.warn("all feature vectors are identical; model will be degenerate")
    sample_weight = np.array([weights[label] for label in labels])

    sweep: dict[float, float] = {}
    if val_features and val_labels:
        Xv, val_layout = _as_matrix(val_features)
        if val_layout != layout:
            raise ValueError("validation features have a different layout")
        best = None
        for c in c_grid:
            coefs, intercepts = _fit_ovr(X, labels, classes, sample_weight, c)
            scores = Xv @ coefs.T + intercepts
            preds = [classes[i] for i in scores.argmax(axis=1)]
            acc = _balanced_accuracy(val_labels, preds)
            sweep[c] = acc
            if best is None or acc > best[0]:
                best = (acc, c, coefs, intercepts)
        _, chosen_c, coefs, intercepts = best
        log.info("svm sweep %s -> C=%s", {k: round(v, 4) for k, v in sweep.items()}, chosen_c)
    else:
        chosen_c = c_grid[0]
        coefs, intercepts = _fit_ovr(X, labels, classes, sample_weight, chosen_c)

    model = LinearClassifierModel(
        classes=classes,
        coefs=coefs,
        intercepts=intercepts,
        layout=layout,
        config={"c": chosen_c, "c_grid": list(c_grid), "sweep": {str(k): v for k, v in sweep.items()}},
    )
    return model, sweep


def predict_svm(model: LinearClassifierModel, feature: FeatureVector) -> tuple[str, float]:
    """Argmax over per-class decision values; ties go to the smaller code."""
    if feature.layout != model.layout:
        raise ValueError("feature layout does not match the model")
    scores = model.decision_values(feature.values)
    idx = int(scores.argmax())  # classes sorted, so first max is the smaller code
    return model.classes[idx], float(scores[idx])


def predict_svm_batch(model: LinearClassifierModel, features: list[FeatureVector]) -> list[tuple[str, float]]:
    X, layout = _as_matrix(features)
    if layout != model.layout:
        raise ValueError("feature layout does not match the model")
    scores = X @ model.coefs.T + model.intercepts
    idx = scores.argmax(axis=1)
    return [(model.classes[i], float(s[i])) for i, s in zip(idx, scores)]


def save_svm(model: LinearClassifierModel, path: str | Path) -> None:
    header = json.dumps({
        "classes": model.classes,
        "layout": list(model.layout.segments),
        "config": model.config,
    })
    np.savez(path, coefs=model.coefs, intercepts=model.intercepts,
             header=np.frombuffer(header.encode("utf-8"), dtype=np.uint8))


def load_svm(path: str | Path, expected_layout: FeatureLayout | None = None) -> LinearClassifierModel:
    """Load a persisted model, refusing a feature-layout mismatch."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        layout = FeatureLayout(segments=tuple(tuple(seg) for seg in header["layout"]))
        if expected_layout is not None and layout != expected_layout:
            raise ValueError(
                f"stored feature layout {layout.segments} does not match the "
                f"extractor configuration {expected_layout.segments}"
            )
        return LinearClassifierModel(
            classes=list(header["classes"]),
            coefs=data["coefs"],
            intercepts=data["intercepts"],
            layout=layout,
            config=header.get("config", {}),
        )
