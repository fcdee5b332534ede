"""Train all three classifier backends on a small synthetic corpus.

Compares the handcrafted-feature linear SVM, the weighted-cross-entropy
softmax CNN, and the metric-learning nearest-centroid classifier on the same
splits, then saves every model for the service demo.
"""

import time
from pathlib import Path

from glyphscribe.cnn import (
    SoftmaxClassifierModel, predict_classifier_batch, save_classifier, train_classifier,
)
from glyphscribe.corpus import class_frequencies, class_weights
from glyphscribe.evaluation import balanced_accuracy, per_class_report
from glyphscribe.features import extract_features
from glyphscribe.metric import (
    EncoderModel, MetricTrainConfig, classify_batch, compute_centroids, embed_many,
    save_centroids, save_encoder, train_encoder,
)
from glyphscribe.nn import TrainSchedule
from glyphscribe.svm import predict_svm_batch, save_svm, train_svm
from glyphscribe.synthetic import SHAPES, make_dataset

MODELS = Path(__file__).parent / "output" / "models"
MODELS.mkdir(parents=True, exist_ok=True)

shapes = SHAPES[:8]
train = make_dataset(shapes, per_class=24, seed=1)
val = make_dataset(shapes, per_class=6, seed=2)
test = make_dataset(shapes, per_class=8, seed=3)
y_test = [s.code for s in test]
weights = class_weights(class_frequencies(train))
print(f"{len(shapes)} classes, {len(train)} train / {len(val)} val / {len(test)} test")

# --- Trad-ML: HOG + projections + class-weighted linear SVM -------------------
t0 = time.perf_counter()
feats_train = [extract_features(s.image) for s in train]
feats_val = [extract_features(s.image) for s in val]
feats_test = [extract_features(s.image) for s in test]
svm_model, sweep = train_svm(
    feats_train, [s.code for s in train], weights,
    val_features=feats_val, val_labels=[s.code for s in val],
)
svm_acc = balanced_accuracy(y_test, [c for c, _ in predict_svm_batch(svm_model, feats_test)])
print(f"Trad-ML      balanced accuracy {svm_acc:.3f}  "
      f"(C sweep {dict((k, round(v, 3)) for k, v in sweep.items())}, {time.perf_counter()-t0:.0f}s)")
save_svm(svm_model, MODELS / "svm.npz")

# --- CNN-End2End: softmax head + weighted categorical cross-entropy -----------
t0 = time.perf_counter()
cnn = SoftmaxClassifierModel.build(sorted({s.code for s in train}), input_size=24,
                                   channels=(8, 16, 32), hidden=256, seed=0)
cnn, cnn_history = train_classifier(
    cnn, train, val, weights,
    TrainSchedule(learning_rate=2e-3, max_epochs=15, patience=5, batch_size=64, seed=0),
)
cnn_acc = balanced_accuracy(
    y_test, [c for c, _, _ in predict_classifier_batch(cnn, [s.image for s in test])]
)
print(f"CNN-End2End  balanced accuracy {cnn_acc:.3f}  "
      f"({len(cnn_history.epochs)} epochs, {time.perf_counter()-t0:.0f}s)")
save_classifier(cnn, MODELS / "cnn.npz")

# --- Deep-MML: Siamese cosine-contrastive encoder + nearest centroid ----------
t0 = time.perf_counter()
encoder = EncoderModel.build(input_size=24, channels=(8, 16, 32), embed_dim=128, seed=0)
config = MetricTrainConfig(pairs_per_epoch=1500, val_pairs=500, batch_pairs=128,
                           learning_rate=2e-3, max_epochs=10, patience=4, seed=0)
encoder, history = train_encoder(encoder, train, val, config)
table = compute_centroids(encoder, train)
z = embed_many(encoder, [s.image for s in test])
mml_preds = [p.code for p in classify_batch(z, table)]
mml_acc = balanced_accuracy(y_test, mml_preds)
print(f"Deep-MML     balanced accuracy {mml_acc:.3f}  "
      f"({len(history.epochs)} epochs, best val loss {history.best_val_loss:.4f}, "
      f"{time.perf_counter()-t0:.0f}s)")
save_encoder(encoder, MODELS / "encoder.npz")
save_centroids(table, MODELS / "centroids.npz")

report = per_class_report(y_test, mml_preds)
print("\nDeep-MML per-class F1:")
for code, m in sorted(report.per_class.items()):
    print(f"  {code:5s} P {m.precision:.2f}  R {m.recall:.2f}  F1 {m.f1:.2f}  n={m.support}")
print(f"\nmodels saved to {MODELS}")
