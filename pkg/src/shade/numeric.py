"""Dense array arithmetic, seeded randomness, and careful reductions.

Tensors are plain ``numpy.ndarray`` objects in float64, row-major. Every
public operation validates its inputs and raises ``ValueError`` with the
offending shapes named, so callers get actionable messages instead of numpy
broadcasting surprises.
"""

from __future__ import annotations

import numpy as np

Tensor = np.ndarray


def as_tensor(values) -> Tensor:
    """Convert to a float64 array (copying only when needed)."""
    return np.asarray(values, dtype=np.float64)


class Rng:
    """Deterministic random stream: fixed algorithm (PCG64), splittable.

    The same seed and call sequence produce bit-identical values on every
    platform. ``split`` derives independent child streams from the parent
    seed and an integer key, so subsystems (init, batching, dropout) can own
    their own streams without coupling their consumption order.
    """

    def __init__(self, seed: int, _sequence: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._sequence = _sequence if _sequence is not None else np.random.SeedSequence(self.seed)
        self._gen = np.random.Generator(np.random.PCG64(self._sequence))

    def split(self, key: int) -> "Rng":
        """Child stream for subsystem ``key``; independent of the parent."""
        child = np.random.SeedSequence(entropy=self._sequence.entropy,
                                       spawn_key=self._sequence.spawn_key + (int(key),))
        return Rng(self.seed, _sequence=child)

    def gaussian(self, shape, mean: float = 0.0, std: float = 1.0) -> Tensor:
        if std < 0:
            raise ValueError(f"std must be >= 0, got {std}")
        return mean + std * self._gen.standard_normal(size=shape)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> Tensor:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_bool(self, shape, prob_true: float) -> np.ndarray:
        """Bernoulli mask: True with probability ``prob_true``."""
        return self._gen.uniform(0.0, 1.0, size=shape) < prob_true


def rng_gaussian(rng: Rng, shape, mean: float = 0.0, std: float = 1.0) -> Tensor:
    """I.i.d. normal samples, deterministic under the stream's seed."""
    return rng.gaussian(shape, mean, std)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m x k) and b (k x n)."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def _normalized_weights(weights, n: int) -> Tensor:
    w = as_tensor(weights).reshape(-1)
    if w.shape[0] != n:
        raise ValueError(f"weights length {w.shape[0]} does not match data length {n}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must not be all zero")
    return w / total


def reduce_mean(t: Tensor, weights=None) -> float:
    """Mean of all entries; optional nonnegative weights (normalized to sum 1)."""
    x = as_tensor(t).reshape(-1)
    if x.size == 0:
        raise ValueError("reduce_mean of an empty tensor")
    if weights is None:
        return float(x.mean())
    w = _normalized_weights(weights, x.size)
    return float(np.dot(w, x))


def reduce_var(t: Tensor, weights=None) -> float:
    """Population variance via the two-pass (mean-then-deviation) formula.

    Weighted form: sum_i w_i (x_i - mean_w)^2 with weights normalized to 1,
    which reduces to the ordinary /N variance for equal weights.
    """
    x = as_tensor(t).reshape(-1)
    if x.size == 0:
        raise ValueError("reduce_var of an empty tensor")
    if weights is None:
        mu = x.mean()
        d = x - mu
        return float(np.dot(d, d) / x.size)
    w = _normalized_weights(weights, x.size)
    mu = np.dot(w, x)
    d = x - mu
    return float(np.dot(w, d * d))
