import numpy as np
import pytest

from shade.datasets import Dataset
from shade.infotheory import GAUSSIAN_ENTROPY
from shade.layers import Dense
from shade.monitor import mean_layer_entropies, unit_conditional_entropies
from shade.network import Network
from shade.numeric import Rng


def passthrough_net(dim=1):
    """Dense layer wired as identity so the pre-activation is the input."""
    layer = Dense(dim, dim)
    layer.w[...] = np.eye(dim)
    return Network([layer])


def test_constant_unit_reports_zero_and_flags():
    net = passthrough_net()
    ds = Dataset(np.full((200, 1), 0.7), np.zeros(200, dtype=int), num_classes=2)
    rec = unit_conditional_entropies(net, ds, 0)[0]
    assert rec.degenerate
    assert rec.h_given_class == 0.0
    assert rec.h_given_latent == 0.0


def test_class_conditional_gaussian_matches_closed_form():
    # unit ~ N(c, 1) per class, two balanced classes, 1e5 samples
    n = 100_000
    rng = Rng(40)
    labels = np.arange(n) % 2
    values = rng.gaussian(n) + np.where(labels == 0, -2.0, 2.0)
    ds = Dataset(values[:, None], labels, num_classes=2)
    rec = unit_conditional_entropies(passthrough_net(), ds, 0)[0]
    assert abs(rec.h_given_class - GAUSSIAN_ENTROPY) < 0.05
    # the marginal of the mixture is wider than either component
    assert rec.h_marginal > rec.h_given_class


def test_latent_partition_reduces_entropy_for_bimodal_unit():
    # presence code separates the two lobes, so H(Y|Z) < H(Y)
    n = 50_000
    rng = Rng(41)
    mode = rng.choice_bool(n, 0.5)
    values = np.where(mode, rng.gaussian(n, 3.0, 0.4), rng.gaussian(n, -3.0, 0.4))
    ds = Dataset(values[:, None], np.zeros(n, dtype=int), num_classes=1)
    rec = unit_conditional_entropies(passthrough_net(), ds, 0)[0]
    assert rec.h_given_latent < rec.h_marginal


def test_small_class_excluded_and_flagged():
    values = np.concatenate([Rng(42).gaussian(100), np.full(3, 5.0)])
    labels = np.concatenate([np.zeros(100, dtype=int), np.ones(3, dtype=int)])
    ds = Dataset(values[:, None], labels, num_classes=2)
    rec = unit_conditional_entropies(passthrough_net(), ds, 0)[0]
    assert rec.excluded_classes == [1]


def test_entropy_bounds_cap_estimates():
    n = 50_000
    values = Rng(43).gaussian(n, 1.0, 1.5)
    labels = Rng(44).integers(0, 2, n)
    ds = Dataset(values[:, None], labels, num_classes=2)
    rec = unit_conditional_entropies(passthrough_net(), ds, 0)[0]
    # every estimate respects its variance cap up to histogram bias
    assert rec.h_marginal <= rec.h_marginal_bound + 0.05
    assert rec.h_given_class <= rec.h_given_class_bound + 0.05
    assert rec.h_given_latent <= rec.h_given_latent_bound + 0.05


def test_mean_layer_entropies_average_units():
    net = passthrough_net(dim=3)
    rng = Rng(45)
    values = rng.gaussian((5000, 3), std=2.0)
    ds = Dataset(values, rng.integers(0, 2, 5000), num_classes=2)
    h_c, h_z = mean_layer_entropies(net, ds, 0)
    recs = unit_conditional_entropies(net, ds, 0)
    assert h_c == pytest.approx(np.mean([r.h_given_class for r in recs]))
    assert h_z == pytest.approx(np.mean([r.h_given_latent for r in recs]))


def test_non_dense_layer_rejected():
    net = passthrough_net()
    ds = Dataset(np.zeros((20, 1)), np.zeros(20, dtype=int), num_classes=1)
    with pytest.raises(ValueError, match="not a dense/conv layer"):
        unit_conditional_entropies(net, ds, 5)
