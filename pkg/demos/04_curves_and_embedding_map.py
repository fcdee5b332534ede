"""Operating curves and a 2-D embedding map for the metric classifier.

Sweeps the cosine-similarity decision threshold to get accuracy/coverage and
one-vs-rest precision-recall curves, then projects test embeddings with
t-SNE and renders per-class centroids and 2-sigma ellipses.
"""

from pathlib import Path

import numpy as np

from glyphscribe.evaluation import (
    curves_to_json, embedding_map, embedding_map_to_json, operating_curves,
    render_embedding_map,
)
from glyphscribe.metric import classify_batch, embed_many, load_centroids, load_encoder
from glyphscribe.synthetic import SHAPES, make_dataset

MODELS = Path(__file__).parent / "output" / "models"
OUT = Path(__file__).parent / "output" / "analysis"
OUT.mkdir(parents=True, exist_ok=True)
if not (MODELS / "encoder.npz").exists():
    raise SystemExit("run 02_train_and_compare_classifiers.py first")

encoder = load_encoder(MODELS / "encoder.npz")
table = load_centroids(MODELS / "centroids.npz", encoder)

test = make_dataset(SHAPES[:8], per_class=20, seed=9)
y_true = [s.code for s in test]
z = embed_many(encoder, [s.image for s in test])
predictions = classify_batch(z, table)
scores = [(p.code, p.similarity) for p in predictions]

thresholds = [round(t, 2) for t in np.arange(0.0, 1.0, 0.05)]
curves = operating_curves(scores, y_true, thresholds)
(OUT / "curves.json").write_text(curves_to_json(curves))
print("accuracy over accepted vs cosine threshold:")
for tau, acc, coverage in curves["acc_vs_threshold"].points[::4]:
    shown = "n/a " if acc is None else f"{acc:.3f}"
    print(f"  tau {tau:.2f}: accuracy {shown} coverage {coverage:.2f}")

emap = embedding_map(z, y_true, perplexity=12, seed=0)
(OUT / "embedding_map.json").write_text(embedding_map_to_json(emap))
render_embedding_map(emap, OUT / "embedding_map.png")
print(f"\ncurves and map written to {OUT}")
