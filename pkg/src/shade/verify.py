"""Self-contained verification suites behind the ``verify`` command.

Every suite builds its own synthetic inputs, checks an implementation claim
against an independent route (finite differences, exhaustive enumeration,
closed forms), and reports per-check pass/fail results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .infotheory import (DiscreteJoint, MarkovChain, conditional_subadditivity,
                         sample_entropy, variance_bound_check, verify_decompositions,
                         verify_dpi)
from .losses import cross_entropy
from .network import Network, build_convnet, build_mlp
from .numeric import Rng
from .reconstruction import (GaussianPair, reconstruction_bounds_continuous,
                             reconstruction_bounds_discrete)
from .shade_reg import ShadeState, per_sample_penalty, per_sample_penalty_dy


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def _rel_err(a: float, b: float, floor: float = 1e-4) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def central_difference(fn, x: float, h: float) -> float:
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


def parameter_finite_differences(net: Network, objective, h: float = 1e-5):
    """Central-difference gradient of ``objective()`` for every parameter.

    Returns {(layer_index, name): array}; the objective is re-evaluated with
    each entry nudged in place, so it must be a pure function of the current
    parameters.
    """
    grads = {}
    for i, name, param in net.parameters():
        g = np.zeros_like(param)
        flat = param.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = objective()
            flat[j] = orig - h
            down = objective()
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * h)
        grads[(i, name)] = g
    return grads


def unit_gradient_check(count: int = 100, seed: int = 7,
                        tolerance: float = 1e-6) -> CheckResult:
    """Analytic per-unit penalty slope vs central differences, away from 0."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(count):
        y = float(rng.uniform((), 0.05, 3.0))
        if rng.choice_bool((), 0.5):
            y = -y
        mu0 = float(rng.uniform((), -3.0, 3.0))
        mu1 = float(rng.uniform((), -3.0, 3.0))
        h = 1e-6 * max(1.0, abs(y))
        fd = central_difference(lambda t: float(per_sample_penalty(t, mu0, mu1)), y, h)
        an = float(per_sample_penalty_dy(y, mu0, mu1))
        worst = max(worst, _rel_err(an, fd, floor=1e-6))
    return CheckResult("unit-penalty-gradient", worst < tolerance,
                       f"worst relative error {worst:.3e} over {count} configs "
                       f"(tolerance {tolerance:g})")


def _network_objective(net: Network, x, labels, state: ShadeState | None, beta: float):
    def objective() -> float:
        logits, preacts = net.forward(x, training=True)
        loss, _ = cross_entropy(logits, labels)
        if state is not None and beta:
            loss += beta * state.penalty(preacts)
        return loss

    return objective


def _network_gradient_worst(net: Network, x, labels, state, beta) -> float:
    logits, preacts = net.forward(x, training=True)
    _, dlogits = cross_entropy(logits, labels)
    preact_grads = None
    if state is not None and beta:
        preact_grads = {i: beta * g
                        for i, g in state.penalty_preact_grads(preacts).items()}
    net.backward(dlogits, preact_grads)
    analytic = {(i, name): net.layers[i].grads[name].copy()
                for i, name, _ in net.parameters()}
    numeric = parameter_finite_differences(
        net, _network_objective(net, x, labels, state, beta))
    worst = 0.0
    for key, fd in numeric.items():
        an = analytic[key]
        for a, b in zip(an.reshape(-1), fd.reshape(-1)):
            worst = max(worst, _rel_err(a, b))
    return worst


def network_gradient_check(seed: int = 11, tolerance: float = 1e-5) -> list[CheckResult]:
    """Whole-objective gradients (classification + weighted penalty, moving
    averages held fixed) vs finite differences, on an MLP and a convnet."""
    results = []

    rng = Rng(seed)
    mlp = build_mlp(12, [8, 6], 3, rng.split(0))
    state = ShadeState(mlp.unit_counts())
    # push the moving averages off their symmetric initialization
    _, preacts = mlp.forward(rng.split(1).gaussian((16, 12)), training=True)
    state.update(preacts)
    x = rng.split(2).gaussian((4, 12))
    labels = rng.split(3).integers(0, 3, 4)
    worst = _network_gradient_worst(mlp, x, labels, state, beta=0.37)
    results.append(CheckResult(
        "mlp-objective-gradient", worst < tolerance,
        f"worst relative error {worst:.3e} (tolerance {tolerance:g})"))

    conv = build_convnet(1, (8, 8), 3, rng.split(4), channels=(3, 3, 3))
    cstate = ShadeState(conv.unit_counts())
    xc = rng.split(5).gaussian((3, 1, 8, 8))
    clabels = rng.split(6).integers(0, 3, 3)
    _, cpre = conv.forward(xc, training=True)
    cstate.update(cpre)
    worst = _network_gradient_worst(conv, xc, clabels, cstate, beta=0.21)
    results.append(CheckResult(
        "convnet-objective-gradient", worst < tolerance,
        f"worst relative error {worst:.3e} (tolerance {tolerance:g})"))
    return results


def verify_gradients() -> list[CheckResult]:
    return [unit_gradient_check()] + network_gradient_check()


def verify_algorithm1() -> list[CheckResult]:
    """Moving-average recurrence: worked single-sample step and the
    constant-stream fixed points."""
    results = []

    state = ShadeState({0: 1})
    state.update({0: np.array([[0.0]])})
    observed = tuple(float(v) for v in (state.p0[0][0], state.p1[0][0],
                                        state.mu0[0][0], state.mu1[0][0]))
    expected = (0.6, 0.4, -0.8, 0.8)
    err = max(abs(o - e) for o, e in zip(observed, expected))
    results.append(CheckResult(
        "single-sample-step", err < 1e-12,
        f"(p0, p1, mu0, mu1) = {tuple(round(v, 6) for v in observed)}, "
        f"max deviation {err:.2e}"))

    for c in (0.7, 2.0):
        state = ShadeState({0: 1})
        batch = {0: np.full((5, 1), c)}
        for _ in range(500):
            state.update(batch)
        p1_target = 1.0 - np.exp(-c)
        errs = (abs(state.p1[0][0] - p1_target),
                abs(state.p0[0][0] - np.exp(-c)),
                abs(state.mu0[0][0] - c), abs(state.mu1[0][0] - c))
        results.append(CheckResult(
            f"constant-stream-fixed-point-c={c}", max(errs) < 1e-6,
            f"p1 -> {state.p1[0][0]:.8f} (limit {p1_target:.8f}), "
            f"means -> ({state.mu0[0][0]:.8f}, {state.mu1[0][0]:.8f}); "
            f"max deviation {max(errs):.2e}"))
    return results


def verify_bounds(sample_count: int = 100_000, seed: int = 23) -> list[CheckResult]:
    """Variance cap on differential entropy across sample families."""
    rng = Rng(seed)
    results = []
    gauss = rng.split(0).gaussian(sample_count)
    exp = -np.log1p(-rng.split(1).uniform(sample_count))
    uni = rng.split(2).uniform(sample_count)
    modes = rng.split(3).choice_bool(sample_count, 0.5)
    bimodal = np.where(modes, rng.split(4).gaussian(sample_count, 2.0, 0.5),
                       rng.split(5).gaussian(sample_count, -2.0, 0.5))

    cases = [
        ("gaussian", gauss, 0.0, 0.05),       # equality case
        ("exponential", exp, 0.41894, 0.05),  # 0.5 ln(2 pi e) - 1
        ("uniform", uni, 0.17650, 0.05),      # 0.5 ln(2 pi e / 12)
        ("bimodal-mixture", bimodal, None, None),
    ]
    for name, samples, expected_gap, slackband in cases:
        report = variance_bound_check(samples, bins=64, tolerance=0.05)
        gap = report.rows[0].gap
        ok = report.ok
        detail = f"gap {gap:.4f} nats"
        if expected_gap is not None:
            ok = ok and abs(gap - expected_gap) <= slackband
            detail += f" (expected {expected_gap:.4f} +/- {slackband})"
        results.append(CheckResult(f"variance-bound-{name}", ok, detail))

    # soft-partitioned form: every posterior-weighted mode obeys the cap too
    shifted = rng.split(6).gaussian(sample_count, 0.8, 1.2)
    from .shade_reg import presence_posterior
    p0, p1 = presence_posterior(shifted)
    report = variance_bound_check(shifted, mode_posteriors=np.column_stack([p0, p1]),
                                  bins=64, tolerance=0.05)
    results.append(CheckResult(
        "variance-bound-mode-partition", report.ok,
        "; ".join(f"{r.label}: gap {r.gap:.4f}" for r in report.rows)))
    return results


def _random_dist(rng: Rng, shape) -> np.ndarray:
    t = rng.uniform(shape, 0.05, 1.0)
    return t / t.sum()


def verify_dpi_suite(instances: int = 100, seed: int = 31) -> list[CheckResult]:
    """Monotone conditional-entropy chains and coordinate sub-additivity on
    exhaustively enumerated joints."""
    rng = Rng(seed)
    worst_chain = np.inf
    worst_sub = np.inf
    for k in range(instances):
        r = rng.split(k)
        p_cx = _random_dist(r, (3, 12))
        stages = []
        domain = 12
        for target in (8, 5, 3):
            f = r.integers(0, target, domain)
            stages.append(("map", f))
            domain = int(f.max()) + 1  # realized support of the next variable
        report = verify_dpi(MarkovChain(p_cx, stages))
        if not report.ok:
            return [CheckResult("dpi-chain", False,
                                f"instance {k}: slacks {report.monotone_slacks}")]
        worst_chain = min(worst_chain, min(report.monotone_slacks))

        p_cy = _random_dist(r, (3, 12))
        maps = [r.integers(0, 4, 12), r.integers(0, 3, 12)]
        slack, ok = conditional_subadditivity(p_cy, maps)
        if not ok:
            return [CheckResult("dpi-subadditivity", False,
                                f"instance {k}: slack {slack}")]
        worst_sub = min(worst_sub, slack)

    decomp_worst = 0.0
    for k in range(instances):
        r = rng.split(1000 + k)
        from .infotheory import joint_from_map
        p_xc = _random_dist(r, (16, 3))
        f = r.integers(0, 6, 16)
        report = verify_decompositions(joint_from_map(p_xc, f))
        if not report.ok:
            return [CheckResult("decompositions", False,
                                f"instance {k}: max gap {report.max_gap:.2e}")]
        decomp_worst = max(decomp_worst, report.max_gap)

    return [
        CheckResult("dpi-chain", True,
                    f"{instances} random 3-stage chains, min slack {worst_chain:.2e}"),
        CheckResult("dpi-subadditivity", True,
                    f"{instances} random coordinate splits, min slack {worst_sub:.2e}"),
        CheckResult("decompositions", True,
                    f"{instances} random deterministic maps, max identity gap "
                    f"{decomp_worst:.2e}"),
    ]


def verify_reconstruction_suite(joints: int = 200, seed: int = 47) -> list[CheckResult]:
    rng = Rng(seed)
    worst_lower = np.inf
    worst_upper = np.inf
    for k in range(joints):
        table = _random_dist(rng.split(k), (8, 8))
        report = reconstruction_bounds_discrete(DiscreteJoint(table))
        if not report.ok:
            return [CheckResult("reconstruction-discrete", False,
                                f"joint {k}: slacks ({report.lower_slack:.2e}, "
                                f"{report.upper_slack:.2e})")]
        worst_lower = min(worst_lower, report.lower_slack)
        worst_upper = min(worst_upper, report.upper_slack)
    results = [CheckResult(
        "reconstruction-discrete", True,
        f"{joints} random 8x8 joints, min slacks lower {worst_lower:.3e} / "
        f"upper {worst_upper:.3e}")]

    exhaustive_ok = True
    for k in range(20):
        table = _random_dist(rng.split(10_000 + k), (4, 4))
        report = reconstruction_bounds_discrete(DiscreteJoint(table), exhaustive=True)
        exhaustive_ok = exhaustive_ok and report.ok \
            and report.argmax_exhaustively_optimal
    results.append(CheckResult(
        "reconstruction-argmax-optimal", exhaustive_ok,
        "posterior argmax beat or tied all 4^4 reconstructors on 20 random joints"))

    for key, name, model in (
            (1, "independent", GaussianPair(var_x=1.5, var_y=2.0, cov=0.0)),
            (2, "additive-noise", GaussianPair(var_x=2.0, var_y=2.5, cov=2.0))):
        report = reconstruction_bounds_continuous(model, rng.split(20_000 + key),
                                                  sample_count=100_000)
        results.append(CheckResult(
            f"reconstruction-continuous-{name}", report.ok,
            f"floor {report.entropy_floor:.4f} vs Var(X|Y) {report.conditional_var:.4f}, "
            f"sample MSE {report.empirical_mse:.4f} "
            f"(rel err {report.mse_relative_error:.4f})"))
    return results


SCOPES = {
    "gradients": verify_gradients,
    "algorithm1": verify_algorithm1,
    "bounds": verify_bounds,
    "dpi": verify_dpi_suite,
    "reconstruction": verify_reconstruction_suite,
}


def run_scope(scope: str) -> list[CheckResult]:
    if scope == "all":
        results = []
        for name in SCOPES:
            results.extend(SCOPES[name]())
        return results
    if scope not in SCOPES:
        raise ValueError(f"unknown verification scope {scope!r}; "
                         f"choose from {sorted(SCOPES)} or 'all'")
    return SCOPES[scope]()
