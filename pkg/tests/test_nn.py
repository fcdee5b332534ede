import numpy as np
import pytest

from glyphscribe.nn import Adam, TrainSchedule, run_training
from glyphscribe.nn.layers import (
    Conv2d, Dense, L2Normalize, MaxPool2, ReLU, Sequential,
)


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + eps
        up = f()
        x.flat[i] = old - eps
        down = f()
        x.flat[i] = old
        g.flat[i] = (up - down) / (2 * eps)
    return g


def check_layer_grads(layer, x, rng, tol=1e-6):
    w = rng.standard_normal(layer.forward(x, train=True).shape)

    def loss():
        return float(np.sum(layer.forward(x, train=True) * w))

    loss()
    dx = layer.backward(w)
    num_dx = numeric_grad(loss, x)
    assert np.abs(dx - num_dx).max() <= tol * max(np.abs(num_dx).max(), 1.0)
    for name, p in layer.params.items():
        loss()
        layer.backward(w)
        num = numeric_grad(loss, p)
        got = layer.grads[name]
        assert np.abs(got - num).max() <= tol * max(np.abs(num).max(), 1.0), name


def test_conv_grad(rng):
    layer = Conv2d(2, 3, rng=rng, dtype=np.float64)
    check_layer_grads(layer, rng.standard_normal((2, 2, 6, 6)), rng)


def test_dense_grad(rng):
    layer = Dense(5, 4, rng=rng, dtype=np.float64)
    check_layer_grads(layer, rng.standard_normal((3, 5)), rng)


def test_maxpool_grad(rng):
    check_layer_grads(MaxPool2(), rng.standard_normal((2, 3, 4, 4)), rng)


def test_relu_grad(rng):
    check_layer_grads(ReLU(), rng.standard_normal((4, 7)) + 0.05, rng)


def test_l2normalize_grad_and_norm(rng):
    layer = L2Normalize()
    x = rng.standard_normal((5, 6))
    z = layer.forward(x)
    assert np.allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)
    check_layer_grads(layer, x, rng)


def test_maxpool_rejects_odd_dims(rng):
    with pytest.raises(ValueError):
        MaxPool2().forward(rng.standard_normal((1, 1, 3, 4)))


def test_sequential_state_round_trip(rng):
    net = Sequential([Dense(4, 3, rng=rng, dtype=np.float64), ReLU(),
                      Dense(3, 2, rng=rng, dtype=np.float64)])
    state = net.get_state()
    x = rng.standard_normal((2, 4))
    before = net.forward(x)
    for p, _ in net.param_pairs():
        p += 1.0
    assert not np.allclose(net.forward(x), before)
    net.set_state(state)
    assert np.allclose(net.forward(x), before)


def test_adam_matches_reference_updates():
    p = np.array([1.0, -2.0, 0.5])
    g = np.array([0.1, -0.3, 0.2])
    opt = Adam(lr=0.01)
    opt.step([(p, g)])
    opt.step([(p, g)])

    # naive reference with explicit bias correction
    ref_p = np.array([1.0, -2.0, 0.5])
    m = np.zeros(3)
    v = np.zeros(3)
    for t in (1, 2):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1 - 0.9**t)
        v_hat = v / (1 - 0.999**t)
        ref_p = ref_p - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert np.allclose(p, ref_p, atol=1e-6)


def _quadratic_net(rng):
    net = Sequential([Dense(2, 1, rng=rng, dtype=np.float64)])
    return net


def test_run_training_early_stops_on_flat_validation(rng):
    net = _quadratic_net(rng)
    schedule = TrainSchedule(learning_rate=0.0, max_epochs=50, patience=5)
    history = run_training(net, schedule, run_epoch=lambda opt, e: 1.0, val_loss_fn=lambda: 1.0)
    assert len(history.epochs) == 5  # stops after `patience` non-improving epochs
    assert history.best_epoch == 0
    assert history.best_val_loss == 1.0


def test_run_training_restores_best_weights(rng):
    net = _quadratic_net(rng)
    x = rng.standard_normal((16, 2))
    target = x @ np.array([[2.0], [-1.0]])

    def val_loss():
        return float(np.mean((net.forward(x) - target) ** 2))

    def run_epoch(opt, epoch):
        pred = net.forward(x, train=True)
        loss = float(np.mean((pred - target) ** 2))
        net.backward(2 * (pred - target) / len(x))
        opt.step(net.param_pairs())
        return loss

    schedule = TrainSchedule(learning_rate=0.05, max_epochs=40, patience=6)
    history = run_training(net, schedule, run_epoch, val_loss)
    assert history.best_val_loss < history.initial_val_loss
    assert val_loss() == pytest.approx(history.best_val_loss)


def test_run_training_raises_on_nonfinite(rng):
    net = _quadratic_net(rng)
    with pytest.raises(RuntimeError, match="non-finite"):
        run_training(net, TrainSchedule(max_epochs=3),
                     run_epoch=lambda opt, e: float("nan"), val_loss_fn=lambda: 1.0)


def test_run_training_reduces_lr_on_plateau(rng):
    net = _quadratic_net(rng)
    lrs = []

    def run_epoch(opt, epoch):
        lrs.append(opt.lr)
        return 1.0

    schedule = TrainSchedule(learning_rate=1e-2, max_epochs=20, patience=8, lr_patience=3)
    run_training(net, schedule, run_epoch, val_loss_fn=lambda: 1.0)
    assert any(lr < 1e-2 for lr in lrs)
