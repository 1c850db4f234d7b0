"""Discrete entropy tooling and histogram estimators.

Everything internal is measured in nats; reconstruction-bound code that needs
bits converts at its own boundary. Discrete quantities on explicit joint
tables are exact (up to float rounding); sample-based quantities are plug-in
histogram estimates with an optional Miller-Madow correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import as_tensor

LN2 = float(np.log(2.0))
# differential entropy of a unit-variance Gaussian
GAUSSIAN_ENTROPY = 0.5 * float(np.log(2.0 * np.pi * np.e))

_DIST_TOL = 1e-9


def _validate_dist(p: np.ndarray, what: str = "distribution") -> np.ndarray:
    p = as_tensor(p)
    if np.any(p < 0):
        raise ValueError(f"{what} has negative mass")
    total = p.sum()
    if abs(total - 1.0) > _DIST_TOL:
        raise ValueError(f"{what} sums to {total!r}, not 1")
    return p


def discrete_entropy(dist) -> float:
    """Shannon entropy -sum p ln p in nats, with 0 ln 0 = 0."""
    p = _validate_dist(dist).reshape(-1)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


class DiscreteJoint:
    """Explicit joint probability table over 2 or 3 discrete variables."""

    def __init__(self, table):
        self.table = _validate_dist(table, "joint table")
        if self.table.ndim < 2:
            raise ValueError("joint table needs at least 2 axes")

    @property
    def support_sizes(self) -> tuple:
        return self.table.shape

    def marginal(self, axes) -> np.ndarray:
        """Marginal over the given axes (tuple of axis indices, order kept)."""
        if isinstance(axes, int):
            axes = (axes,)
        drop = tuple(a for a in range(self.table.ndim) if a not in axes)
        m = self.table.sum(axis=drop)
        order = np.argsort(np.argsort(axes))
        return np.transpose(m, order) if m.ndim > 1 else m

    def entropy(self, axes=None) -> float:
        """Joint entropy of the given axes (all of them by default), nats."""
        if axes is None:
            return discrete_entropy(self.table)
        return discrete_entropy(self.marginal(axes))


def conditional_entropy(joint: DiscreteJoint, condition_on) -> float:
    """H(remaining axes | conditioning axes) = sum_c p(c) H(rest | c), nats."""
    if isinstance(condition_on, int):
        condition_on = (condition_on,)
    table = joint.table
    rest = tuple(a for a in range(table.ndim) if a not in condition_on)
    if not rest:
        raise ValueError("conditioning on every axis leaves nothing to measure")
    # move conditioning axes to the front, flatten both groups
    t = np.transpose(table, condition_on + rest)
    t = t.reshape(int(np.prod(t.shape[:len(condition_on)])), -1)
    p_c = t.sum(axis=1)
    h = 0.0
    for pc, row in zip(p_c, t):
        if pc <= 0:
            continue
        h += pc * discrete_entropy(row / pc)
    return float(h)


def mutual_information(joint: DiscreteJoint) -> float:
    """I between the two axes of a 2-d joint: H(A) + H(B) - H(A,B), nats."""
    if joint.table.ndim != 2:
        raise ValueError("mutual_information expects a 2-d joint")
    return joint.entropy((0,)) + joint.entropy((1,)) - joint.entropy()


def joint_from_map(p_xc, mapping) -> DiscreteJoint:
    """Build p(x, y, c) from p(x, c) and a deterministic y = f(x)."""
    p_xc = _validate_dist(p_xc, "p(x, c)")
    f = np.asarray(mapping, dtype=np.int64)
    nx, nc = p_xc.shape
    if f.shape != (nx,):
        raise ValueError(f"mapping length {f.shape} does not match |X|={nx}")
    ny = int(f.max()) + 1
    table = np.zeros((nx, ny, nc))
    table[np.arange(nx), f, :] = p_xc
    return DiscreteJoint(table)


@dataclass
class DecompositionReport:
    h_y_given_x: float
    gap_data_processing: float   # H(Y) vs H(X) - H(X|Y)
    gap_class_split: float       # H(Y) vs I(C,Y) + H(Y|C)
    gap_conditional: float       # H(Y|C) vs H(X|C) - H(X|Y,C)
    tolerance: float

    @property
    def max_gap(self) -> float:
        return max(self.h_y_given_x, self.gap_data_processing,
                   self.gap_class_split, self.gap_conditional)

    @property
    def ok(self) -> bool:
        return self.max_gap <= self.tolerance


def verify_decompositions(joint: DiscreteJoint, tolerance: float = 1e-10) -> DecompositionReport:
    """Check the exact entropy identities on a p(x, y, c) table.

    Requires y to be a deterministic function of x (rejected otherwise):
    every x with mass puts its whole conditional mass on a single y.
    """
    t = joint.table
    if t.ndim != 3:
        raise ValueError("verify_decompositions expects a 3-d joint p(x, y, c)")
    p_xy = t.sum(axis=2)
    for x in range(p_xy.shape[0]):
        row = p_xy[x]
        if row.sum() > 0 and np.count_nonzero(row) != 1:
            raise ValueError(f"y is not deterministic given x={x}")

    h_y = joint.entropy((1,))
    h_x = joint.entropy((0,))
    h_y_given_x = conditional_entropy(DiscreteJoint(p_xy), condition_on=0)
    h_x_given_y = conditional_entropy(DiscreteJoint(p_xy), condition_on=1)
    p_yc = DiscreteJoint(t.sum(axis=0))
    h_y_given_c = conditional_entropy(p_yc, condition_on=1)
    i_cy = mutual_information(p_yc)
    h_x_given_c = conditional_entropy(DiscreteJoint(t.sum(axis=1)), condition_on=1)
    # H(X | Y, C) = H(X, Y, C) - H(Y, C)
    h_x_given_yc = joint.entropy() - joint.entropy((1, 2))

    return DecompositionReport(
        h_y_given_x=abs(h_y_given_x),
        gap_data_processing=abs(h_y - (h_x - h_x_given_y)),
        gap_class_split=abs(h_y - (i_cy + h_y_given_c)),
        gap_conditional=abs(h_y_given_c - (h_x_given_c - h_x_given_yc)),
        tolerance=tolerance,
    )


class MarkovChain:
    """C -> Y0 -> Y1 -> ... with each stage a map or a stochastic kernel.

    Stages are ("map", index array) for deterministic transformations or
    ("kernel", row-stochastic matrix). The starting point is the joint table
    p(c, y0). Invalid kernels (negative entries or rows not summing to 1)
    are rejected: they do not describe a Markov stage.
    """

    def __init__(self, p_cy0, stages):
        self.start = _validate_dist(p_cy0, "p(c, y0)")
        if self.start.ndim != 2:
            raise ValueError("p(c, y0) must be a 2-d table")
        self.stages = []
        for kind, payload in stages:
            if kind == "map":
                f = np.asarray(payload, dtype=np.int64)
                if f.ndim != 1 or np.any(f < 0):
                    raise ValueError("deterministic stage must be a 1-d index array")
                self.stages.append(("map", f))
            elif kind == "kernel":
                m = as_tensor(payload)
                if m.ndim != 2 or np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1) > _DIST_TOL):
                    raise ValueError("kernel stage must be a row-stochastic matrix")
                self.stages.append(("kernel", m))
            else:
                raise ValueError(f"unknown stage type {kind!r}")

    def joints(self) -> list[np.ndarray]:
        """p(c, y_k) for every stage, starting at p(c, y0)."""
        out = [self.start]
        cur = self.start
        for kind, payload in self.stages:
            if kind == "map":
                f = payload
                if f.shape[0] != cur.shape[1]:
                    raise ValueError(f"stage map over {f.shape[0]} states applied to "
                                     f"variable with {cur.shape[1]} states")
                nxt = np.zeros((cur.shape[0], int(f.max()) + 1))
                np.add.at(nxt, (slice(None), f), cur)
            else:
                if payload.shape[0] != cur.shape[1]:
                    raise ValueError("kernel shape does not match current variable")
                nxt = cur @ payload
            out.append(nxt)
            cur = nxt
        return out

    def conditional_entropies(self) -> list[float]:
        """H(Y_k | C) along the chain, nats."""
        return [conditional_entropy(DiscreteJoint(j), condition_on=0)
                for j in self.joints()]


@dataclass
class DpiReport:
    entropies: list
    monotone_slacks: list  # H(Y_k|C) - H(Y_{k+1}|C) for deterministic stages
    tolerance: float

    @property
    def ok(self) -> bool:
        return all(s >= -self.tolerance for s in self.monotone_slacks)


def verify_dpi(chain: MarkovChain, tolerance: float = 1e-12) -> DpiReport:
    """Conditional entropy must not increase through deterministic stages."""
    hs = chain.conditional_entropies()
    slacks = [hs[k] - hs[k + 1] for k, (kind, _) in enumerate(chain.stages)
              if kind == "map"]
    return DpiReport(entropies=hs, monotone_slacks=slacks, tolerance=tolerance)


def conditional_subadditivity(p_cy, coord_maps, tolerance: float = 1e-12):
    """Slack of H(vec(Y)|C) <= sum_i H(Y_i|C) for coordinates Y_i = f_i(Y).

    The vector variable is the tuple of all coordinates; everything is
    enumerated exactly. Returns (slack, ok): slack = sum_i H_i - H_vec.
    """
    p = _validate_dist(p_cy, "p(c, y)")
    if p.ndim != 2:
        raise ValueError("p(c, y) must be a 2-d table")
    maps = [np.asarray(f, dtype=np.int64) for f in coord_maps]
    if not maps:
        raise ValueError("need at least one coordinate map")
    sizes = [int(f.max()) + 1 for f in maps]
    # tuple of coordinates as a single variable via mixed-radix encoding
    code = np.zeros(p.shape[1], dtype=np.int64)
    for f, size in zip(maps, sizes):
        if f.shape[0] != p.shape[1]:
            raise ValueError("coordinate map length does not match |Y|")
        code = code * size + f
    joint_vec = np.zeros((p.shape[0], int(code.max()) + 1))
    np.add.at(joint_vec, (slice(None), code), p)
    h_vec = conditional_entropy(DiscreteJoint(joint_vec), condition_on=0)
    h_sum = 0.0
    for f, size in zip(maps, sizes):
        j = np.zeros((p.shape[0], size))
        np.add.at(j, (slice(None), f), p)
        h_sum += conditional_entropy(DiscreteJoint(j), condition_on=0)
    slack = h_sum - h_vec
    return float(slack), slack >= -tolerance


@dataclass
class EntropyEstimate:
    """Histogram entropy of a real sample, discrete and differential flavors."""

    discrete: float       # nats over the occupied bins
    differential: float   # discrete + ln(bin width)
    estimator: str        # "plugin-histogram" or "miller-madow"
    sample_count: int
    bin_count: int
    bin_width: float
    degenerate: bool = False


def sample_entropy(samples, bins: int = 64, bin_range=None,
                   miller_madow: bool = False) -> EntropyEstimate:
    """Plug-in histogram entropy of a 1-d sample.

    Bins are uniform over ``bin_range`` (default: the sample's [min, max]).
    The Miller-Madow variant adds (occupied bins - 1) / 2K. A zero-width
    sample range yields a flagged zero estimate instead of an error.
    """
    x = as_tensor(samples).reshape(-1)
    if x.size < 2:
        raise ValueError("sample entropy needs at least 2 samples")
    lo, hi = bin_range if bin_range is not None else (x.min(), x.max())
    name = "miller-madow" if miller_madow else "plugin-histogram"
    if hi <= lo:
        return EntropyEstimate(0.0, 0.0, name, x.size, bins, 0.0, degenerate=True)
    counts, edges = np.histogram(x, bins=bins, range=(float(lo), float(hi)))
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the requested bin range")
    p = counts[counts > 0] / total
    h = float(-(p * np.log(p)).sum())
    if miller_madow:
        h += (len(p) - 1) / (2.0 * total)
    width = float(edges[1] - edges[0])
    return EntropyEstimate(discrete=h, differential=h + float(np.log(width)),
                           estimator=name, sample_count=int(total),
                           bin_count=bins, bin_width=width)


def weighted_sample_entropy(samples, weights, bins: int = 64,
                            bin_range=None) -> EntropyEstimate:
    """Histogram entropy of a sample carrying nonnegative weights."""
    x = as_tensor(samples).reshape(-1)
    w = as_tensor(weights).reshape(-1)
    if x.shape != w.shape:
        raise ValueError("weights must match samples")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative and not all zero")
    lo, hi = bin_range if bin_range is not None else (x.min(), x.max())
    if hi <= lo:
        return EntropyEstimate(0.0, 0.0, "plugin-histogram", x.size, bins, 0.0,
                               degenerate=True)
    mass, edges = np.histogram(x, bins=bins, range=(float(lo), float(hi)), weights=w)
    total = mass.sum()
    p = mass[mass > 0] / total
    h = float(-(p * np.log(p)).sum())
    width = float(edges[1] - edges[0])
    return EntropyEstimate(discrete=h, differential=h + float(np.log(width)),
                           estimator="plugin-histogram", sample_count=x.size,
                           bin_count=bins, bin_width=width)


def gaussian_entropy_bound(variance: float) -> float:
    """The variance cap on differential entropy: 0.5 ln(2 pi e Var), nats."""
    return 0.5 * float(np.log(2.0 * np.pi * np.e * variance))


@dataclass
class BoundRow:
    label: str
    entropy: float
    bound: float
    gap: float
    ok: bool
    degenerate: bool = False


@dataclass
class VarianceBoundReport:
    rows: list
    tolerance: float

    @property
    def ok(self) -> bool:
        return all(r.ok or r.degenerate for r in self.rows)


def variance_bound_check(samples, mode_posteriors=None, bins: int = 64,
                         tolerance: float = 0.05) -> VarianceBoundReport:
    """Compare histogram differential entropy against 0.5 ln(2 pi e Var).

    Without posteriors, checks the marginal sample. With a (K, 2) posterior
    matrix, checks each mode's weighted sample and the prior-weighted
    aggregate (the conditional-entropy vs conditional-variance form). The gap
    (bound minus estimate) must stay above -tolerance, which absorbs the
    histogram estimator's bias at the tested sample sizes. Near-zero
    variances are flagged degenerate and not asserted.
    """
    from .numeric import reduce_var

    x = as_tensor(samples).reshape(-1)
    if x.size < 2:
        raise ValueError("variance bound check needs at least 2 samples")
    rows = []

    def row(label, est: EntropyEstimate, variance: float):
        if variance < 1e-12 or est.degenerate:
            rows.append(BoundRow(label, est.differential, float("-inf"), 0.0,
                                 ok=True, degenerate=True))
            return
        bound = gaussian_entropy_bound(variance)
        gap = bound - est.differential
        rows.append(BoundRow(label, est.differential, bound, gap,
                             ok=gap >= -tolerance))

    if mode_posteriors is None:
        row("marginal", sample_entropy(x, bins=bins), reduce_var(x))
        return VarianceBoundReport(rows=rows, tolerance=tolerance)

    post = as_tensor(mode_posteriors)
    if post.shape != (x.size, 2):
        raise ValueError(f"mode posteriors must be (K, 2), got {post.shape}")
    agg_entropy = 0.0
    agg_var = 0.0
    for z in (0, 1):
        w = post[:, z]
        prior = float(w.mean())
        if prior <= 0:
            continue
        est = weighted_sample_entropy(x, w, bins=bins)
        var = reduce_var(x, weights=w)
        row(f"mode{z}", est, var)
        agg_entropy += prior * est.differential
        agg_var += prior * var
    agg = EntropyEstimate(discrete=agg_entropy, differential=agg_entropy,
                          estimator="plugin-histogram", sample_count=x.size,
                          bin_count=bins, bin_width=0.0)
    row("aggregate", agg, agg_var)
    return VarianceBoundReport(rows=rows, tolerance=tolerance)
