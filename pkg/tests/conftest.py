import numpy as np
import pytest

from glyphscribe.corpus import class_frequencies, class_weights
from glyphscribe.metric import (
    EncoderModel, MetricTrainConfig, compute_centroids, save_centroids, save_encoder,
    train_encoder,
)
from glyphscribe.cnn import SoftmaxClassifierModel, save_classifier, train_classifier
from glyphscribe.features import extract_features
from glyphscribe.nn import TrainSchedule
from glyphscribe.svm import save_svm, train_svm
from glyphscribe.synthetic import SHAPES, make_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(0)


TOY_SHAPES = SHAPES[:4]  # circle-ish, bars, cross: visually distinct


@pytest.fixture(scope="session")
def toy_dataset():
    """Small 4-class synthetic corpus shared by training-dependent tests."""
    train = make_dataset(TOY_SHAPES, per_class=16, seed=7)
    val = make_dataset(TOY_SHAPES, per_class=4, seed=8)
    test = make_dataset(TOY_SHAPES, per_class=6, seed=9)
    return train, val, test


@pytest.fixture(scope="session")
def toy_encoder(toy_dataset):
    train, val, _ = toy_dataset
    encoder = EncoderModel.build(input_size=16, channels=(6, 12), embed_dim=32, seed=0)
    config = MetricTrainConfig(
        pairs_per_epoch=600, val_pairs=200, batch_pairs=64,
        learning_rate=2e-3, max_epochs=8, patience=4, seed=0,
    )
    encoder, history = train_encoder(encoder, train, val, config)
    return encoder, history


@pytest.fixture(scope="session")
def toy_centroids(toy_encoder, toy_dataset):
    encoder, _ = toy_encoder
    train, _, _ = toy_dataset
    return compute_centroids(encoder, train)


@pytest.fixture(scope="session")
def toy_cnn(toy_dataset):
    train, val, _ = toy_dataset
    weights = class_weights(class_frequencies(train))
    model = SoftmaxClassifierModel.build(
        sorted({s.code for s in train}), input_size=16, channels=(6, 12), hidden=64, seed=0,
    )
    schedule = TrainSchedule(learning_rate=2e-3, max_epochs=10, patience=4, batch_size=32, seed=0)
    model, history = train_classifier(model, train, val, weights, schedule)
    return model, history


@pytest.fixture(scope="session")
def toy_svm(toy_dataset):
    train, val, _ = toy_dataset
    weights = class_weights(class_frequencies(train))
    feats = [extract_features(s.image) for s in train]
    val_feats = [extract_features(s.image) for s in val]
    model, sweep = train_svm(
        feats, [s.code for s in train], weights,
        c_grid=(0.1, 1.0), val_features=val_feats, val_labels=[s.code for s in val],
    )
    return model, sweep


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, toy_encoder, toy_centroids, toy_cnn, toy_svm):
    """Directory of persisted toy models, as the service expects them."""
    path = tmp_path_factory.mktemp("models")
    encoder, _ = toy_encoder
    save_encoder(encoder, path / "encoder.npz")
    save_centroids(toy_centroids, path / "centroids.npz")
    save_classifier(toy_cnn[0], path / "cnn.npz")
    save_svm(toy_svm[0], path / "svm.npz")
    return path
