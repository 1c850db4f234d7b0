import numpy as np
import pytest

from shade.baseline_reg import RegularizerConfig, weight_decay_loss
from shade.layers import Dense
from shade.losses import cross_entropy
from shade.network import Network, build_mlp
from shade.numeric import Rng
from shade.optim import Adam, SgdMomentum, make_optimizer


def one_step(net, opt, x, labels):
    logits, _ = net.forward(x, training=True)
    _, dl = cross_entropy(logits, labels)
    net.backward(dl)
    opt.step(net)


def test_sgd_momentum_matches_hand_recurrence():
    layer = Dense(1, 1)
    layer.w[...] = [[1.0]]
    net = Network([layer])
    opt = SgdMomentum(learning_rate=0.1, momentum=0.9)
    w, v = 1.0, 0.0
    for _ in range(4):
        net.forward(np.array([[2.0]]), training=True)
        net.backward(np.array([[1.0]]))  # grad w = x * delta = 2
        opt.step(net)
        v = 0.9 * v + 2.0
        w -= 0.1 * v
        assert layer.w[0, 0] == pytest.approx(w, abs=1e-15)


def test_update_magnitude_vanishes_with_gradient():
    for opt in (SgdMomentum(0.1), Adam(0.1)):
        layer = Dense(2, 2, Rng(1))
        net = Network([layer])
        before = layer.w.copy()
        for _ in range(5):
            net.forward(np.zeros((3, 2)), training=True)
            net.backward(np.zeros((3, 2)))
            opt.step(net)
        assert np.array_equal(layer.w, before)


def test_adam_step_size_bounded_by_lr_initially():
    layer = Dense(1, 1)
    net = Network([layer])
    opt = Adam(0.01)
    net.forward(np.array([[1.0]]), training=True)
    net.backward(np.array([[5.0]]))
    opt.step(net)
    # bias-corrected first step is lr * g / (|g| + eps) ~ lr
    assert abs(layer.w[0, 0]) == pytest.approx(0.01, rel=1e-5)


def test_learning_rate_decay_applied_per_step():
    opt = SgdMomentum(1.0, decay=0.5)
    net = Network([Dense(1, 1)])
    for expected in (1.0, 0.5, 0.25):
        assert opt.learning_rate == pytest.approx(expected)
        net.forward(np.array([[1.0]]), training=True)
        net.backward(np.array([[1.0]]))
        opt.step(net)


def test_frozen_layers_not_updated():
    net = build_mlp(4, [3], 2, Rng(2))
    net.layers[0].frozen = True
    w0 = net.layers[0].w.copy()
    opt = Adam(0.05)
    x = Rng(3).gaussian((6, 4))
    labels = Rng(4).integers(0, 2, 6)
    for _ in range(3):
        one_step(net, opt, x, labels)
    assert np.array_equal(net.layers[0].w, w0)
    assert not np.array_equal(net.layers[2].w, np.zeros_like(net.layers[2].w))


def test_make_optimizer_rejects_unknown_kind():
    with pytest.raises(ValueError, match="optimizer kind"):
        make_optimizer("rmsprop", 0.1)


def test_weight_decay_zero_weights():
    net = Network([Dense(3, 2)])
    loss, grads = weight_decay_loss(net)
    assert loss == 0.0
    assert np.array_equal(grads[(0, "w")], np.zeros((3, 2)))


def test_weight_decay_single_weight_hand_case():
    layer = Dense(1, 1)
    layer.w[...] = [[3.0]]
    loss, grads = weight_decay_loss(Network([layer]))
    assert loss == pytest.approx(4.5)
    assert grads[(0, "w")][0, 0] == pytest.approx(3.0)


def test_weight_decay_matches_elementwise_oracle_and_skips_biases():
    net = build_mlp(5, [4, 3], 2, Rng(5))
    for layer in net.layers:
        if isinstance(layer, Dense):
            layer.b[...] = 100.0  # must not contribute
    loss, grads = weight_decay_loss(net)
    expected = sum(0.5 * float((l.w ** 2).sum())
                   for l in net.layers if isinstance(l, Dense))
    assert loss == pytest.approx(expected, abs=1e-12)
    for (i, name), g in grads.items():
        assert name == "w"
        assert np.array_equal(g, net.layers[i].w)


def test_weight_decay_gradient_matches_finite_difference():
    net = Network([Dense(2, 2, Rng(6))])
    loss, grads = weight_decay_loss(net)
    h = 1e-6
    w = net.layers[0].w
    for idx in np.ndindex(*w.shape):
        orig = w[idx]
        w[idx] = orig + h
        up, _ = weight_decay_loss(net)
        w[idx] = orig - h
        down, _ = weight_decay_loss(net)
        w[idx] = orig
        fd = (up - down) / (2 * h)
        assert abs(grads[(0, "w")][idx] - fd) <= 1e-8 * max(1.0, abs(fd))


def test_regularizer_config_validation():
    RegularizerConfig(kind="shade", beta=0.01)
    with pytest.raises(ValueError, match="unknown regularizer kind"):
        RegularizerConfig(kind="l1")
    with pytest.raises(ValueError, match=">= 0"):
        RegularizerConfig(kind="weight-decay", beta=-1.0)
    with pytest.raises(ValueError, match="dropout rate"):
        RegularizerConfig(kind="dropout", dropout_rates=[0.5, 1.0])
