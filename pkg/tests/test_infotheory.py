import numpy as np
import pytest

from shade.infotheory import (GAUSSIAN_ENTROPY, DiscreteJoint, MarkovChain,
                              conditional_entropy, conditional_subadditivity,
                              discrete_entropy, joint_from_map,
                              mutual_information, sample_entropy,
                              variance_bound_check, verify_decompositions,
                              verify_dpi, weighted_sample_entropy)
from shade.numeric import Rng


def random_dist(rng, shape):
    t = rng.uniform(shape, 0.01, 1.0)
    return t / t.sum()


def test_entropy_uniform():
    assert discrete_entropy(np.full(4, 0.25)) == pytest.approx(np.log(4), abs=1e-12)


def test_entropy_point_mass_zero():
    assert discrete_entropy(np.array([0.0, 1.0, 0.0])) == 0.0


def test_entropy_half_quarter_quarter():
    got = discrete_entropy(np.array([0.5, 0.25, 0.25]))
    assert got == pytest.approx(1.5 * np.log(2), abs=1e-12)


def test_entropy_rejects_invalid():
    with pytest.raises(ValueError, match="negative"):
        discrete_entropy(np.array([1.5, -0.5]))
    with pytest.raises(ValueError, match="sums to"):
        discrete_entropy(np.array([0.5, 0.4]))


def test_conditional_entropy_independent():
    px = random_dist(Rng(1), 4)
    py = random_dist(Rng(2), 5)
    joint = DiscreteJoint(np.outer(px, py))
    assert conditional_entropy(joint, condition_on=0) == pytest.approx(
        discrete_entropy(py), abs=1e-12)


def test_conditional_entropy_deterministic_map_is_zero():
    px = random_dist(Rng(3), 6)
    f = np.array([0, 1, 0, 2, 1, 0])
    table = np.zeros((6, 3))
    table[np.arange(6), f] = px
    assert conditional_entropy(DiscreteJoint(table), condition_on=0) == \
        pytest.approx(0.0, abs=1e-14)


def test_conditional_entropy_chain_rule_identity():
    joint = DiscreteJoint(random_dist(Rng(4), (4, 4)))
    direct = conditional_entropy(joint, condition_on=1)
    via_chain = joint.entropy() - joint.entropy((1,))
    assert direct == pytest.approx(via_chain, abs=1e-12)


def test_mutual_information_symmetry_and_independence():
    joint = DiscreteJoint(np.outer(random_dist(Rng(5), 3), random_dist(Rng(6), 4)))
    assert mutual_information(joint) == pytest.approx(0.0, abs=1e-12)
    j2 = DiscreteJoint(random_dist(Rng(7), (3, 4)))
    assert mutual_information(j2) == pytest.approx(
        mutual_information(DiscreteJoint(j2.table.T)), abs=1e-12)


def test_decompositions_identity_map():
    p_xc = random_dist(Rng(8), (8, 3))
    joint = joint_from_map(p_xc, np.arange(8))
    report = verify_decompositions(joint)
    assert report.ok
    # identity map: Y carries all of X
    p_xy = joint.table.sum(axis=2)
    assert conditional_entropy(DiscreteJoint(p_xy), condition_on=1) == \
        pytest.approx(0.0, abs=1e-13)


def test_decompositions_constant_map():
    p_xc = random_dist(Rng(9), (6, 2))
    joint = joint_from_map(p_xc, np.zeros(6, dtype=int))
    report = verify_decompositions(joint)
    assert report.ok
    p_xy = joint.table.sum(axis=2)
    h_x = discrete_entropy(p_xy.sum(axis=1))
    assert DiscreteJoint(p_xy).entropy((1,)) == pytest.approx(0.0, abs=1e-13)
    assert conditional_entropy(DiscreteJoint(p_xy), condition_on=1) == \
        pytest.approx(h_x, abs=1e-12)


def test_decompositions_random_maps_hold_to_1e10():
    rng = Rng(10)
    for k in range(30):
        p_xc = random_dist(rng.split(k), (16, 3))
        f = rng.split(100 + k).integers(0, 6, 16)
        report = verify_decompositions(joint_from_map(p_xc, f))
        assert report.ok, f"instance {k}: max gap {report.max_gap}"
        assert report.max_gap <= 1e-10


def test_decompositions_reject_stochastic_y():
    table = random_dist(Rng(11), (3, 3, 2))  # full-support y given x
    with pytest.raises(ValueError, match="deterministic"):
        verify_decompositions(DiscreteJoint(table))


def test_dpi_identity_stages_equal_entropy():
    p = random_dist(Rng(12), (3, 6))
    chain = MarkovChain(p, [("map", np.arange(6)), ("map", np.arange(6))])
    hs = chain.conditional_entropies()
    assert hs[0] == pytest.approx(hs[1], abs=1e-13)
    assert hs[1] == pytest.approx(hs[2], abs=1e-13)


def test_dpi_collapse_stage_gives_zero():
    p = random_dist(Rng(13), (3, 6))
    chain = MarkovChain(p, [("map", np.zeros(6, dtype=int))])
    assert chain.conditional_entropies()[-1] == pytest.approx(0.0, abs=1e-14)


def test_dpi_monotone_on_random_chains():
    rng = Rng(14)
    for k in range(30):
        r = rng.split(k)
        p = random_dist(r, (3, 12))
        stages = []
        domain = 12
        for target in (8, 5, 3):
            f = r.integers(0, target, domain)
            stages.append(("map", f))
            domain = int(f.max()) + 1
        report = verify_dpi(MarkovChain(p, stages))
        assert report.ok
        assert min(report.monotone_slacks) >= -1e-12


def test_dpi_rejects_invalid_kernel():
    p = random_dist(Rng(15), (2, 3))
    with pytest.raises(ValueError, match="row-stochastic"):
        MarkovChain(p, [("kernel", np.array([[0.5, 0.2], [1.0, 0.0], [0.3, 0.3]]))])


def test_subadditivity_on_random_coordinates():
    rng = Rng(16)
    for k in range(30):
        r = rng.split(k)
        p = random_dist(r, (3, 12))
        maps = [r.integers(0, 4, 12), r.integers(0, 3, 12), r.integers(0, 2, 12)]
        slack, ok = conditional_subadditivity(p, maps)
        assert ok and slack >= -1e-12


def test_subadditivity_tight_for_single_coordinate():
    p = random_dist(Rng(17), (2, 8))
    f = np.array([0, 1, 2, 3, 0, 1, 2, 3])
    slack, ok = conditional_subadditivity(p, [f])
    assert ok
    assert slack == pytest.approx(0.0, abs=1e-13)


def test_sample_entropy_constant_is_degenerate_zero():
    est = sample_entropy(np.full(100, 2.0))
    assert est.degenerate
    assert est.differential == 0.0


def test_sample_entropy_gaussian_closed_form():
    # 10^6 standard normal samples, 64 uniform bins over +/- 5 sigma
    x = Rng(20).gaussian(1_000_000)
    est = sample_entropy(x, bins=64, bin_range=(-5.0, 5.0))
    assert abs(est.differential - GAUSSIAN_ENTROPY) < 0.02


def test_sample_entropy_error_shrinks_with_sample_count():
    # uniform data; truth is ln(1) = 0 per unit interval
    errors = []
    for k_exp in (12, 14, 16):
        errs = []
        for seed in range(5):
            x = Rng(100 + seed).uniform(2 ** k_exp)
            est = sample_entropy(x, bins=64, bin_range=(0.0, 1.0))
            errs.append(abs(est.differential - 0.0))
        errors.append(np.mean(errs))
    assert errors[0] > errors[1] > errors[2]


def test_miller_madow_adds_occupancy_correction():
    x = Rng(21).gaussian(5000)
    plain = sample_entropy(x, bins=64)
    mm = sample_entropy(x, bins=64, miller_madow=True)
    assert mm.estimator == "miller-madow"
    assert mm.discrete > plain.discrete
    assert mm.discrete - plain.discrete < 64 / (2 * 5000)


def test_weighted_sample_entropy_reduces_to_plain():
    x = Rng(22).gaussian(10_000)
    plain = sample_entropy(x, bins=32)
    weighted = weighted_sample_entropy(x, np.ones_like(x), bins=32)
    assert weighted.differential == pytest.approx(plain.differential, abs=1e-12)


def test_variance_bound_gaussian_near_equality():
    x = Rng(23).gaussian(100_000)
    report = variance_bound_check(x, bins=64, tolerance=0.05)
    assert report.ok
    assert abs(report.rows[0].gap) <= 0.05


def test_variance_bound_exponential_gap():
    u = Rng(24).uniform(100_000)
    x = -np.log1p(-u)  # unit exponential: entropy 1 nat, variance 1
    report = variance_bound_check(x, bins=64, tolerance=0.05)
    expected_gap = 0.5 * np.log(2 * np.pi * np.e) - 1.0
    assert report.ok
    assert report.rows[0].gap == pytest.approx(expected_gap, abs=0.05)


def test_variance_bound_uniform_gap():
    x = Rng(25).uniform(100_000)
    report = variance_bound_check(x, bins=64, tolerance=0.05)
    expected_gap = 0.5 * np.log(2 * np.pi * np.e / 12.0)
    assert report.ok
    assert report.rows[0].gap == pytest.approx(expected_gap, abs=0.05)


def test_variance_bound_degenerate_flagged():
    report = variance_bound_check(np.full(50, 1.0))
    assert report.rows[0].degenerate
    assert report.ok


def test_variance_bound_mode_partition():
    from shade.shade_reg import presence_posterior
    y = Rng(26).gaussian(100_000, 0.5, 1.0)
    p0, p1 = presence_posterior(y)
    report = variance_bound_check(y, mode_posteriors=np.column_stack([p0, p1]),
                                  bins=64, tolerance=0.05)
    labels = [r.label for r in report.rows]
    assert labels == ["mode0", "mode1", "aggregate"]
    assert report.ok
