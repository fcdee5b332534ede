"""Register a sign class the encoder never saw, without retraining.

Loads the encoder and centroid table saved by demo 02, adds one new class
from five example images (a new centroid is all it takes), and measures
recall on held-out examples of the new sign.
"""

from pathlib import Path

import numpy as np

from glyphscribe.metric import (
    classify_batch, embed_many, load_centroids, load_encoder, register_class,
)
from glyphscribe.synthetic import SHAPES, make_dataset

MODELS = Path(__file__).parent / "output" / "models"
if not (MODELS / "encoder.npz").exists():
    raise SystemExit("run 02_train_and_compare_classifiers.py first")

encoder = load_encoder(MODELS / "encoder.npz")
table = load_centroids(MODELS / "centroids.npz", encoder)
print(f"loaded table with {len(table.entries)} classes: {table.codes()}")

new_shape = SHAPES[10]  # not among the 8 classes demo 02 trained on
examples = make_dataset([new_shape], per_class=20, seed=77)
code = examples[0].code
print(f"registering {code} ({new_shape!r}) from 5 examples")

table = register_class(table, code, [s.image for s in examples[:5]], encoder)
z = embed_many(encoder, [s.image for s in examples[5:]])
predictions = classify_batch(z, table)
recall = float(np.mean([p.code == code for p in predictions]))
print(f"recall on 15 unseen {code} instances: {recall:.2f}")
print("nearest rivals:", sorted({p.runner_up[0] for p in predictions if p.runner_up}))
