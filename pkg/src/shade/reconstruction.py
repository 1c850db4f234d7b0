"""Reconstruction-error bounds tying invariance to conditional entropy.

Discrete case: the best guess of X from Y errs with probability E bounded by
(H(X|Y) - 1) / log2|X| <= E <= 1 - 2^(-H(X|Y)), entropies in bits. The
continuous squared-error case: the conditional-mean reconstructor achieves
E = Var(X|Y) >= exp(2 H(X|Y)) / (2 pi e), with equality for Gaussians. Both
are verified here, the discrete one exactly on enumerable joints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .infotheory import LN2, DiscreteJoint, conditional_entropy
from .numeric import Rng, as_tensor

EXHAUSTIVE_SUPPORT_LIMIT = 16
EXHAUSTIVE_RECONSTRUCTOR_CAP = 1 << 20


def optimal_reconstructor(p_xy: np.ndarray) -> np.ndarray:
    """Per observed y, the x with greatest posterior mass (ties: lowest x)."""
    return np.asarray(p_xy).argmax(axis=0)


def reconstruction_error(p_xy: np.ndarray, reconstructor) -> float:
    """Exact zero-one error of a reconstructor g: sum_y p(y) p(X != g(y) | y)."""
    p_xy = as_tensor(p_xy)
    g = np.asarray(reconstructor, dtype=np.int64)
    ny = p_xy.shape[1]
    if g.shape != (ny,):
        raise ValueError(f"reconstructor must assign one x per y, got shape {g.shape}")
    hit = p_xy[g, np.arange(ny)].sum()
    return float(1.0 - hit)


@dataclass
class DiscreteReconstructionReport:
    error: float
    h_x_given_y_bits: float
    lower_bound: float
    upper_bound: float
    lower_slack: float   # error - lower bound
    upper_slack: float   # upper bound - error
    jensen_slack: float  # log2(1 - error) + H(X|Y), the step behind the upper bound
    argmax_exhaustively_optimal: bool | None
    tolerance: float

    @property
    def ok(self) -> bool:
        bounds_ok = (self.lower_slack >= -self.tolerance
                     and self.upper_slack >= -self.tolerance
                     and self.jensen_slack >= -self.tolerance)
        if self.argmax_exhaustively_optimal is False:
            return False
        return bounds_ok


def reconstruction_bounds_discrete(joint: DiscreteJoint, exhaustive: bool = False,
                                   tolerance: float = 1e-9) -> DiscreteReconstructionReport:
    """Evaluate both zero-one bounds for a p(x, y) table.

    Supports are capped so the computation stays exact. With ``exhaustive``
    set, every |X|^|Y| reconstructor is enumerated to confirm the posterior
    argmax minimizes the error; that is only allowed at tiny sizes.
    """
    p_xy = joint.table
    if p_xy.ndim != 2:
        raise ValueError("reconstruction bounds need a 2-d joint p(x, y)")
    nx, ny = p_xy.shape
    if nx > EXHAUSTIVE_SUPPORT_LIMIT or ny > EXHAUSTIVE_SUPPORT_LIMIT:
        raise ValueError(f"supports {p_xy.shape} exceed the exact-mode limit of "
                         f"{EXHAUSTIVE_SUPPORT_LIMIT} per variable")

    best = optimal_reconstructor(p_xy)
    error = reconstruction_error(p_xy, best)
    h_bits = conditional_entropy(joint, condition_on=1) / LN2
    lower = (h_bits - 1.0) / np.log2(nx) if nx > 1 else 0.0
    upper = 1.0 - 2.0 ** (-h_bits)
    jensen = (np.log2(1.0 - error) if error < 1.0 else -np.inf) + h_bits

    argmax_optimal = None
    if exhaustive:
        if nx ** ny > EXHAUSTIVE_RECONSTRUCTOR_CAP:
            raise ValueError(f"exhaustive mode over {nx}^{ny} reconstructors is "
                             f"capped at {EXHAUSTIVE_RECONSTRUCTOR_CAP}")
        argmax_optimal = True
        for g in itertools.product(range(nx), repeat=ny):
            if reconstruction_error(p_xy, np.array(g)) < error - 1e-12:
                argmax_optimal = False
                break

    return DiscreteReconstructionReport(
        error=error, h_x_given_y_bits=h_bits,
        lower_bound=float(lower), upper_bound=float(upper),
        lower_slack=error - float(lower), upper_slack=float(upper) - error,
        jensen_slack=float(jensen), argmax_exhaustively_optimal=argmax_optimal,
        tolerance=tolerance)


@dataclass
class GaussianPair:
    """Jointly Gaussian (X, Y) with known moments."""

    var_x: float
    var_y: float
    cov: float
    mean_x: float = 0.0
    mean_y: float = 0.0

    def __post_init__(self):
        det = self.var_x * self.var_y - self.cov ** 2
        if self.var_x <= 0 or self.var_y <= 0 or det <= 0:
            raise ValueError(f"covariance matrix is singular or indefinite "
                             f"(det={det!r})")

    @property
    def conditional_var(self) -> float:
        """Var(X | Y), independent of the observed y for Gaussians."""
        return self.var_x - self.cov ** 2 / self.var_y

    @property
    def conditional_entropy_nats(self) -> float:
        return 0.5 * float(np.log(2.0 * np.pi * np.e * self.conditional_var))

    def conditional_mean(self, y):
        """E[X | Y=y], the squared-error-optimal reconstructor."""
        return self.mean_x + (self.cov / self.var_y) * (as_tensor(y) - self.mean_y)

    def sample(self, rng: Rng, count: int):
        x = rng.gaussian(count, self.mean_x, np.sqrt(self.var_x))
        noise_var = self.var_y - self.cov ** 2 / self.var_x
        y = (self.mean_y + (self.cov / self.var_x) * (x - self.mean_x)
             + rng.gaussian(count, 0.0, np.sqrt(noise_var)))
        return x, y


@dataclass
class ContinuousReconstructionReport:
    h_x_given_y_nats: float
    entropy_floor: float        # exp(2H) / (2 pi e)
    conditional_var: float
    floor_slack: float          # Var(X|Y) - floor; zero for Gaussians
    empirical_mse: float
    mse_relative_error: float
    alternatives_all_worse: bool
    tolerance: float

    @property
    def ok(self) -> bool:
        return (self.floor_slack >= -1e-9
                and self.mse_relative_error <= self.tolerance
                and self.alternatives_all_worse)


def reconstruction_bounds_continuous(model: GaussianPair, rng: Rng,
                                     sample_count: int = 100_000,
                                     tolerance: float = 0.02) -> ContinuousReconstructionReport:
    """Check the squared-error entropy floor on a known Gaussian pair.

    The closed-form floor exp(2 H(X|Y)) / (2 pi e) must not exceed Var(X|Y)
    (they coincide here), the conditional-mean reconstructor's sample MSE
    must sit within ``tolerance`` (relative) of Var(X|Y), and perturbed
    linear reconstructors must all do strictly worse on the same sample.
    """
    h = model.conditional_entropy_nats
    floor = float(np.exp(2.0 * h) / (2.0 * np.pi * np.e))
    cond_var = model.conditional_var

    x, y = model.sample(rng, sample_count)
    mse = float(np.mean((x - model.conditional_mean(y)) ** 2))
    rel = abs(mse - cond_var) / cond_var

    # each alternative differs from the optimal (slope, 0) pair even when the
    # optimal slope is zero (independent case)
    slope = model.cov / model.var_y
    alternatives_worse = True
    for alt_slope, shift in ((slope + 0.2, 0.0), (slope - 0.2, 0.0),
                             (slope, 0.3), (0.5 * slope + 0.1, -0.2)):
        guess = model.mean_x + alt_slope * (y - model.mean_y) + shift
        if float(np.mean((x - guess) ** 2)) <= mse:
            alternatives_worse = False
            break

    return ContinuousReconstructionReport(
        h_x_given_y_nats=h, entropy_floor=floor, conditional_var=cond_var,
        floor_slack=cond_var - floor, empirical_mse=mse,
        mse_relative_error=float(rel), alternatives_all_worse=alternatives_worse,
        tolerance=tolerance)
