"""Metrics and analysis: balanced accuracy, per-class/group reports,
operating curves, and 2-D embedding maps with class ellipses."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codes import code_group


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    recall_undefined: bool = False  # class never appeared in y_true


@dataclass
class ClassReport:
    per_class: dict[str, ClassMetrics]
    balanced_accuracy: float
    macro_f1: float
    micro_f1: float
    total: int


def balanced_accuracy(y_true, y_pred) -> float:
    """Unweighted mean of per-class recall over the classes present in y_true."""
    y_true = list(y_true)
    y_pred = list(y_pred)
    if not y_true:
        raise ValueError("cannot compute balanced accuracy of an empty label set")
    if len(y_true) != len(y_pred):
        raise ValueError("label sequences differ in length")
    hits: Counter = Counter()
    support: Counter = Counter()
    for t, p in zip(y_true, y_pred):
        support[t] += 1
        if t == p:
            hits[t] += 1
    # fsum: correctly rounded regardless of class order
    return math.fsum(hits[c] / support[c] for c in support) / len(support)


def per_class_report(y_true, y_pred) -> ClassReport:
    """One-vs-rest precision/recall/F1 per class plus aggregates.

    A class that is predicted but never true has undefined recall; it is
    reported as 0 and flagged, and excluded from the aggregates.
    """
    y_true = list(y_true)
    y_pred = list(y_pred)
    if not y_true:
        raise ValueError("cannot build a report from an empty label set")
    if len(y_true) != len(y_pred):
        raise ValueError("label sequences differ in length")
    codes = sorted(set(y_true) | set(y_pred))
    tp: Counter = Counter()
    fp: Counter = Counter()
    support: Counter = Counter()
    for t, p in zip(y_true, y_pred):
        support[t] += 1
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
    per_class = {}
    for c in codes:
        sup = support[c]
        predicted = tp[c] + fp[c]
        precision = tp[c] / predicted if predicted else 0.0
        recall = tp[c] / sup if sup else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = ClassMetrics(precision, recall, f1, sup, recall_undefined=sup == 0)
    present = [c for c in codes if support[c] > 0]
    total_tp = sum(tp.values())
    return ClassReport(
        per_class=per_class,
        balanced_accuracy=math.fsum(per_class[c].recall for c in present) / len(present),
        macro_f1=math.fsum(per_class[c].f1 for c in present) / len(present),
        micro_f1=total_tp / len(y_true),
        total=len(y_true),
    )


def group_report(report: ClassReport, grouping=None) -> dict[str, float]:
    """Support-weighted mean F1 per sign group.

    ``grouping`` maps a code to its group (default: alphabetic prefix).  A
    group whose members all have zero support falls back to the unweighted
    mean, which makes the identity grouping reproduce per-class F1 exactly.
    """
    if grouping is None:
        grouping = code_group
    lookup = grouping.__getitem__ if isinstance(grouping, dict) else grouping
    groups: dict[str, list[ClassMetrics]] = {}
    for code, metrics in report.per_class.items():
        try:
            group = lookup(code)
        except KeyError:
            raise ValueError(f"no group for code {code!r}") from None
        groups.setdefault(group, []).append(metrics)
    out = {}
    for group, members in sorted(groups.items()):
        weight = sum(m.support for m in members)
        if weight:
            out[group] = sum(m.f1 * m.support for m in members) / weight
        else:
            out[group] = float(np.mean([m.f1 for m in members]))
    return out


def report_to_csv(report: ClassReport, path: str | Path) -> None:
    lines = ["code,precision,recall,f1,support,recall_undefined"]
    for code in sorted(report.per_class):
        m = report.per_class[code]
        lines.append(f"{code},{m.precision:.6f},{m.recall:.6f},{m.f1:.6f},{m.support},{int(m.recall_undefined)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def report_to_json(report: ClassReport) -> str:
    return json.dumps({
        "balanced_accuracy": report.balanced_accuracy,
        "macro_f1": report.macro_f1,
        "micro_f1": report.micro_f1,
        "total": report.total,
        "per_class": {
            code: {"precision": m.precision, "recall": m.recall, "f1": m.f1,
                   "support": m.support, "recall_undefined": m.recall_undefined}
            for code, m in sorted(report.per_class.items())
        },
    }, indent=2)


# ---------------------------------------------------------------------------
# operating curves

@dataclass
class OperatingCurve:
    kind: str  # "acc_vs_threshold" | "pr_ovr"
    points: list[tuple]  # (threshold, accuracy|None, coverage) or (recall, precision)
    label: str = ""


def operating_curves(
    scores: list[tuple[str, float]],
    y_true: list[str],
    thresholds: list[float],
) -> dict:
    """Accuracy-vs-threshold and one-vs-rest PR curves from (prediction, confidence).

    At each threshold only samples whose confidence clears it count; accuracy
    is None where nothing is accepted.  PR points are per class (precision
    undefined points skipped) plus a macro average.
    """
    if list(thresholds) != sorted(set(thresholds)):
        raise ValueError("thresholds must be strictly increasing")
    if len(scores) != len(y_true):
        raise ValueError("scores and labels differ in length")
    preds = np.array([p for p, _ in scores])
    confs = np.array([c for _, c in scores], dtype=np.float64)
    truth = np.array(y_true)

    acc_points = []
    for tau in thresholds:
        accepted = confs >= tau
        coverage = float(accepted.mean()) if len(accepted) else 0.0
        if accepted.any():
            acc = float((preds[accepted] == truth[accepted]).mean())
        else:
            acc = None
        acc_points.append((float(tau), acc, coverage))
    curves = {
        "acc_vs_threshold": OperatingCurve("acc_vs_threshold", acc_points),
        "pr_ovr": {},
    }

    classes = sorted(set(truth))
    macro: dict[float, list[tuple[float, float]]] = {float(t): [] for t in thresholds}
    for code in classes:
        is_true = truth == code
        n_true = int(is_true.sum())
        points = []
        for tau in thresholds:
            accepted = (preds == code) & (confs >= tau)
            n_acc = int(accepted.sum())
            if n_acc == 0:
                continue
            tp = int((accepted & is_true).sum())
            precision = tp / n_acc
            recall = tp / n_true
            points.append((recall, precision))
            macro[float(tau)].append((recall, precision))
        curves["pr_ovr"][code] = OperatingCurve("pr_ovr", points, label=code)
    macro_points = [
        (float(np.mean([r for r, _ in pts])), float(np.mean([p for _, p in pts])))
        for tau, pts in macro.items() if pts
    ]
    curves["pr_macro"] = OperatingCurve("pr_ovr", macro_points, label="macro")
    return curves


def curves_to_json(curves: dict) -> str:
    def enc(curve: OperatingCurve):
        return {"kind": curve.kind, "label": curve.label, "points": curve.points}
    return json.dumps({
        "acc_vs_threshold": enc(curves["acc_vs_threshold"]),
        "pr_ovr": {code: enc(c) for code, c in curves["pr_ovr"].items()},
        "pr_macro": enc(curves["pr_macro"]),
    }, indent=2)


# ---------------------------------------------------------------------------
# embedding map

@dataclass(frozen=True)
class EllipseParams:
    cx: float
    cy: float
    semi_major: float
    semi_minor: float
    angle_deg: float


@dataclass
class EmbeddingMap:
    points: np.ndarray  # (N, 2)
    codes: list[str]
    centroids: dict[str, tuple[float, float]]
    ellipses: dict[str, EllipseParams] = field(default_factory=dict)


def embedding_map(embeddings: np.ndarray, codes: list[str],
                  perplexity: float = 30.0, seed: int = 0) -> EmbeddingMap:
    """2-D t-SNE projection with per-class centroids and 2-sigma ellipses.

    Ellipses are fitted only for classes with at least 3 points.
    Deterministic for a fixed seed.
    """
    from sklearn.manifold import TSNE

    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = len(embeddings)
    if len(codes) != n:
        raise ValueError("embeddings and codes differ in length")
    if n <= 3 * perplexity:
        raise ValueError(f"need more than {3 * perplexity:.0f} points for perplexity {perplexity}")
    tsne = TSNE(n_components=2, perplexity=perplexity, random_state=seed, init="pca", n_jobs=1)
    points = tsne.fit_transform(embeddings).astype(np.float64)

    centroids = {}
    ellipses = {}
    for code in sorted(set(codes)):
        mask = np.array([c == code for c in codes])
        pts = points[mask]
        centroids[code] = (float(pts[:, 0].mean()), float(pts[:, 1].mean()))
        if len(pts) >= 3:
            cov = np.cov(pts.T)
            vals, vecs = np.linalg.eigh(cov)
            vals = np.maximum(vals, 0)
            major = vecs[:, 1]
            ellipses[code] = EllipseParams(
                cx=centroids[code][0], cy=centroids[code][1],
                semi_major=float(2 * np.sqrt(vals[1])),
                semi_minor=float(2 * np.sqrt(vals[0])),
                angle_deg=float(np.degrees(np.arctan2(major[1], major[0]))),
            )
    return EmbeddingMap(points=points, codes=list(codes), centroids=centroids, ellipses=ellipses)


def embedding_map_to_json(emap: EmbeddingMap) -> str:
    return json.dumps({
        "points": [[float(x), float(y), c] for (x, y), c in zip(emap.points, emap.codes)],
        "centroids": {c: list(v) for c, v in emap.centroids.items()},
        "ellipses": {
            c: {"cx": e.cx, "cy": e.cy, "semi_major": e.semi_major,
                "semi_minor": e.semi_minor, "angle_deg": e.angle_deg}
            for c, e in emap.ellipses.items()
        },
    }, indent=2)


def render_embedding_map(emap: EmbeddingMap, path: str | Path) -> None:
    """Scatter render with class centroids and 2-sigma ellipses."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Ellipse

    classes = sorted(set(emap.codes))
    cmap = plt.get_cmap("tab20", max(len(classes), 1))
    color = {c: cmap(i % 20) for i, c in enumerate(classes)}
    fig, ax = plt.subplots(figsize=(9, 9))
    for c in classes:
        mask = np.array([x == c for x in emap.codes])
        ax.scatter(emap.points[mask, 0], emap.points[mask, 1], s=12, color=color[c], label=c, alpha=0.7)
        cx, cy = emap.centroids[c]
        ax.plot([cx], [cy], marker="x", color=color[c], markersize=10)
        if c in emap.ellipses:
            e = emap.ellipses[c]
            ax.add_patch(Ellipse((e.cx, e.cy), 2 * e.semi_major, 2 * e.semi_minor,
                                 angle=e.angle_deg, fill=False, color=color[c], lw=1.2))
    if len(classes) <= 30:
        ax.legend(fontsize=7, ncol=2)
    ax.set_title("embedding map")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
