"""SHADE regularizer: Bernoulli presence code per neuron, moving-average mode
statistics, the variance-style concentration penalty, and its analytic
gradient.

Each unit's pre-activation y is modelled as carrying a binary latent
"pattern present" code Z with posterior p(Z=1|y) = 1 - exp(-relu(y)). The
penalty pulls each pre-activation toward the running mean of its posterior
mode, which drives the per-mode conditional variance (and with it the
conditional entropy it bounds) down. The mode means and priors are tracked by
exponential moving averages updated once per mini-batch and are treated as
constants by the gradient.
"""

from __future__ import annotations

import io

import numpy as np

from .numeric import as_tensor

# below this prior mass a mode's mean update is skipped (division guard)
PRIOR_FLOOR = 1e-8


def presence_posterior(y):
    """Posterior of the per-unit presence code: returns (p0, p1).

    p1 = 1 - exp(-relu(y)) rises from 0 toward 1 as y grows; negative
    pre-activations are fully "absent" (p0 = 1). Total function, vectorized.
    """
    y = as_tensor(y)
    p0 = np.exp(-np.maximum(y, 0.0))
    return p0, 1.0 - p0


def _posterior_slope(y):
    """d p(Z=1|y) / dy; the kink at 0 takes the right derivative (=1)."""
    y = as_tensor(y)
    return np.where(y >= 0.0, np.exp(-np.maximum(y, 0.0)), 0.0)


def per_sample_penalty(y, mu0, mu1):
    """Penalty of a single pre-activation: sum_z p(z|y) (y - mu_z)^2."""
    p0, p1 = presence_posterior(y)
    y = as_tensor(y)
    return p0 * (y - mu0) ** 2 + p1 * (y - mu1) ** 2


def per_sample_penalty_dy(y, mu0, mu1):
    """Analytic d/dy of ``per_sample_penalty`` with mu held fixed.

    Splits into the posterior-shift term (slope of p(Z=1|y) times the
    difference of squared deviations) and the concentration term pulling y
    toward the mean of its more probable mode.
    """
    y = as_tensor(y)
    p0, p1 = presence_posterior(y)
    shift = _posterior_slope(y) * ((y - mu1) ** 2 - (y - mu0) ** 2)
    pull = 2.0 * p1 * (y - mu1) + 2.0 * p0 * (y - mu0)
    return shift + pull


def weighted_mode_deviation(y, w0, w1, mu0, mu1):
    """sum_k [w0 (y-mu0)^2 + w1 (y-mu1)^2] with fixed mode responsibilities.

    This is the kernel the penalty evaluates after computing responsibilities
    from the posterior; with the responsibilities held fixed it is exactly
    invariant under joint translation of y and both means.
    """
    y = as_tensor(y)
    return float(np.sum(w0 * (y - mu0) ** 2 + w1 * (y - mu1) ** 2))


def _unit_matrix(preact) -> np.ndarray:
    """Fold a cached pre-activation into (samples, units).

    Dense outputs are already (batch, units). Conv outputs treat each output
    channel as one unit and fold the spatial positions into the sample axis,
    since weight sharing means one detector per channel.
    """
    y = as_tensor(preact)
    if y.ndim == 2:
        return y
    if y.ndim == 4:
        n, c, h, w = y.shape
        return y.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    raise ValueError(f"unsupported pre-activation shape {y.shape}")


class ShadeState:
    """Per-unit moving statistics for every regularized layer.

    For each unit: mu0/mu1 estimate the mode-conditional means E(Y|Z=z) and
    p0/p1 the mode priors p(Z=z); ``decay`` is the moving-average decay.
    ``layer_weights`` weight each layer's contribution (all 1 by default) and
    ``beta`` is the global regularization weight.
    """

    def __init__(self, unit_counts: dict[int, int], decay: float = 0.8,
                 layer_weights: dict[int, float] | None = None, beta: float = 1.0):
        if not (0.0 <= decay <= 1.0):
            raise ValueError(f"decay must lie in [0, 1], got {decay}")
        self.decay = float(decay)
        self.beta = float(beta)
        self.unit_counts = dict(unit_counts)
        self.layer_weights = {i: 1.0 for i in unit_counts}
        if layer_weights:
            for i, w in layer_weights.items():
                if i not in self.unit_counts:
                    raise ValueError(f"layer weight given for unregistered layer {i}")
                self.layer_weights[i] = float(w)
        self.mu0 = {i: np.full(n, -1.0) for i, n in unit_counts.items()}
        self.mu1 = {i: np.full(n, 1.0) for i, n in unit_counts.items()}
        self.p0 = {i: np.full(n, 0.5) for i, n in unit_counts.items()}
        self.p1 = {i: np.full(n, 0.5) for i, n in unit_counts.items()}

    def _check_layer(self, i: int, units: int) -> None:
        if i not in self.unit_counts:
            raise ValueError(f"layer {i} is not registered with the regularizer")
        if units != self.unit_counts[i]:
            raise ValueError(f"layer {i} has {units} units, state tracks "
                             f"{self.unit_counts[i]}")

    def update(self, preacts: dict[int, np.ndarray]) -> None:
        """One moving-average step from a mini-batch of pre-activations.

        Priors are refreshed first and the freshly updated priors divide the
        mode-mean accumulators. A mode whose updated prior falls below the
        floor keeps its old mean for this batch (the prior still moves).
        """
        lam = self.decay
        for i in sorted(self.unit_counts):
            if i not in preacts:
                raise ValueError(f"no cached pre-activation for registered layer {i}")
            y = _unit_matrix(preacts[i])
            if y.shape[0] == 0:
                raise ValueError("empty batch in moving-average update")
            self._check_layer(i, y.shape[1])
            post0, post1 = presence_posterior(y)
            for post, prior, mean in ((post0, self.p0, self.mu0),
                                      (post1, self.p1, self.mu1)):
                prior[i] = lam * prior[i] + (1 - lam) * post.mean(axis=0)
                ok = prior[i] >= PRIOR_FLOOR
                contrib = (post * y).mean(axis=0)
                mean[i] = np.where(
                    ok,
                    lam * mean[i] + (1 - lam) * contrib / np.where(ok, prior[i], 1.0),
                    mean[i])

    def penalty(self, preacts: dict[int, np.ndarray]) -> float:
        """Total concentration penalty over all registered layers.

        Per layer: weight * sum over units of the batch mean of
        sum_z p(z|y) (y - mu_z)^2. The batch mean (rather than sum) keeps the
        effective strength independent of batch size.
        """
        total = 0.0
        for i in sorted(self.unit_counts):
            if i not in preacts:
                raise ValueError(f"no cached pre-activation for registered layer {i}")
            y = _unit_matrix(preacts[i])
            self._check_layer(i, y.shape[1])
            per_elem = per_sample_penalty(y, self.mu0[i], self.mu1[i])
            total += self.layer_weights[i] * float(per_elem.mean(axis=0).sum())
        return total

    def penalty_preact_grads(self, preacts: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
        """Gradient of ``penalty`` w.r.t. each cached pre-activation.

        Mode statistics are constants here: the gradient never flows into the
        moving averages. Shapes match the cached tensors, so the result plugs
        straight into ``Network.backward``.
        """
        grads = {}
        for i in sorted(self.unit_counts):
            if i not in preacts:
                raise ValueError(f"no cached pre-activation for registered layer {i}")
            y = as_tensor(preacts[i])
            folded = _unit_matrix(y)
            self._check_layer(i, folded.shape[1])
            scale = self.layer_weights[i] / folded.shape[0]
            g = scale * per_sample_penalty_dy(folded, self.mu0[i], self.mu1[i])
            if y.ndim == 4:
                n, c, h, w = y.shape
                g = g.reshape(n, h, w, c).transpose(0, 3, 1, 2)
            grads[i] = g
        return grads

    def unit_rows(self):
        """Per-unit statistics as (layer, unit, mu0, mu1, p0, p1) tuples."""
        for i in sorted(self.unit_counts):
            for u in range(self.unit_counts[i]):
                yield (i, u, self.mu0[i][u], self.mu1[i][u],
                       self.p0[i][u], self.p1[i][u])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("layer,unit,mu0,mu1,p0,p1\n")
        for layer, unit, m0, m1, q0, q1 in self.unit_rows():
            out.write(f"{layer},{unit},{m0!r},{m1!r},{q0!r},{q1!r}\n")
        return out.getvalue()

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {"shade_layers": np.array(sorted(self.unit_counts), dtype=np.int64),
                  "shade_decay": np.array([self.decay]),
                  "shade_beta": np.array([self.beta])}
        for i in sorted(self.unit_counts):
            arrays[f"shade_mu0_{i}"] = self.mu0[i]
            arrays[f"shade_mu1_{i}"] = self.mu1[i]
            arrays[f"shade_p0_{i}"] = self.p0[i]
            arrays[f"shade_p1_{i}"] = self.p1[i]
            arrays[f"shade_weight_{i}"] = np.array([self.layer_weights[i]])
        return arrays

    @classmethod
    def from_state_arrays(cls, arrays: dict[str, np.ndarray]) -> "ShadeState":
        layers = [int(i) for i in arrays["shade_layers"]]
        counts = {i: arrays[f"shade_mu0_{i}"].shape[0] for i in layers}
        state = cls(counts, decay=float(arrays["shade_decay"][0]),
                    beta=float(arrays["shade_beta"][0]))
        for i in layers:
            state.mu0[i] = np.array(arrays[f"shade_mu0_{i}"])
            state.mu1[i] = np.array(arrays[f"shade_mu1_{i}"])
            state.p0[i] = np.array(arrays[f"shade_p0_{i}"])
            state.p1[i] = np.array(arrays[f"shade_p1_{i}"])
            state.layer_weights[i] = float(arrays[f"shade_weight_{i}"][0])
        return state
