import itertools

import numpy as np
import pytest

from shade.infotheory import DiscreteJoint
from shade.numeric import Rng
from shade.reconstruction import (GaussianPair, optimal_reconstructor,
                                  reconstruction_bounds_continuous,
                                  reconstruction_bounds_discrete,
                                  reconstruction_error)


def random_joint(rng, shape):
    t = rng.uniform(shape, 0.01, 1.0)
    return DiscreteJoint(t / t.sum())


def test_identity_channel_is_tight_at_zero():
    table = np.diag(np.full(4, 0.25))
    report = reconstruction_bounds_discrete(DiscreteJoint(table))
    assert report.error == pytest.approx(0.0, abs=1e-15)
    assert report.h_x_given_y_bits == pytest.approx(0.0, abs=1e-12)
    assert report.upper_bound == pytest.approx(0.0, abs=1e-12)
    assert report.ok


def test_uniform_binary_with_constant_observation():
    # X uniform on {0,1}, Y constant: H(X|Y) = 1 bit, best error = 1/2,
    # and the upper bound 1 - 2^-1 is tight
    table = np.array([[0.5], [0.5]])
    report = reconstruction_bounds_discrete(DiscreteJoint(table), exhaustive=True)
    assert report.h_x_given_y_bits == pytest.approx(1.0, abs=1e-12)
    assert report.error == pytest.approx(0.5, abs=1e-12)
    assert report.upper_bound == pytest.approx(0.5, abs=1e-12)
    assert report.argmax_exhaustively_optimal
    assert report.ok


def test_bounds_hold_on_random_joints():
    rng = Rng(30)
    for k in range(50):
        report = reconstruction_bounds_discrete(random_joint(rng.split(k), (8, 8)))
        assert report.ok, f"joint {k}"
        assert report.lower_slack >= -1e-9 and report.upper_slack >= -1e-9
        # the Jensen step behind the upper bound, log2(1-E) >= -H
        assert report.jensen_slack >= -1e-9


def test_argmax_beats_all_reconstructors_exhaustively():
    rng = Rng(31)
    for k in range(10):
        joint = random_joint(rng.split(k), (4, 4))
        report = reconstruction_bounds_discrete(joint, exhaustive=True)
        assert report.argmax_exhaustively_optimal
        best = optimal_reconstructor(joint.table)
        brute_best = min(
            reconstruction_error(joint.table, np.array(g))
            for g in itertools.product(range(4), repeat=4))
        assert reconstruction_error(joint.table, best) == pytest.approx(
            brute_best, abs=1e-12)


def test_support_size_limit_enforced():
    big = np.full((20, 4), 1.0 / 80)
    with pytest.raises(ValueError, match="exceed"):
        reconstruction_bounds_discrete(DiscreteJoint(big))


def test_gaussian_independent_pair_is_tight():
    model = GaussianPair(var_x=1.5, var_y=2.0, cov=0.0)
    assert model.conditional_var == pytest.approx(1.5)
    report = reconstruction_bounds_continuous(model, Rng(32), sample_count=100_000)
    assert report.entropy_floor == pytest.approx(1.5, rel=1e-12)
    assert report.ok


def test_gaussian_additive_noise_closed_form():
    # Y = X + noise with Var(X)=2, noise 0.5: Var(X|Y) = 0.5*2/2.5 = 0.4
    model = GaussianPair(var_x=2.0, var_y=2.5, cov=2.0)
    assert model.conditional_var == pytest.approx(0.4, rel=1e-12)
    report = reconstruction_bounds_continuous(model, Rng(33), sample_count=100_000)
    assert report.floor_slack == pytest.approx(0.0, abs=1e-9)
    assert report.mse_relative_error <= 0.02
    assert report.alternatives_all_worse
    assert report.ok


def test_singular_covariance_rejected():
    with pytest.raises(ValueError, match="singular"):
        GaussianPair(var_x=1.0, var_y=1.0, cov=1.0)


def test_conditional_mean_is_best_linear_reconstructor_empirically():
    model = GaussianPair(var_x=1.0, var_y=1.3, cov=0.9, mean_x=0.5, mean_y=-0.2)
    x, y = model.sample(Rng(34), 100_000)
    best_mse = np.mean((x - model.conditional_mean(y)) ** 2)
    slope = model.cov / model.var_y
    for alt in (slope * 0.9, slope * 1.1, slope + 0.05):
        guess = model.mean_x + alt * (y - model.mean_y)
        assert np.mean((x - guess) ** 2) > best_mse
