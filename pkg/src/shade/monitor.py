"""Per-unit conditional-entropy diagnostics on a network's pre-activations.

For a chosen layer, each unit's cached pre-activation is collected over a
dataset and summarized by histogram entropy estimates conditioned on the
class label (hard partition, classes weighted by frequency) and on the
latent presence code (soft partition by the posterior).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .infotheory import sample_entropy, weighted_sample_entropy
from .network import Network
from .shade_reg import _unit_matrix, presence_posterior

MIN_CLASS_SAMPLES = 10


@dataclass
class UnitEntropyRecord:
    layer: int
    unit: int
    h_given_class: float
    h_given_latent: float
    h_marginal: float
    sample_count: int
    bin_count: int
    h_given_class_bound: float = float("-inf")
    h_given_latent_bound: float = float("-inf")
    h_marginal_bound: float = float("-inf")
    degenerate: bool = False
    excluded_classes: list = field(default_factory=list)


def _safe_bound(variance: float) -> float:
    from .infotheory import gaussian_entropy_bound
    if variance < 1e-12:
        return float("-inf")
    return gaussian_entropy_bound(variance)


def layer_preactivations(net: Network, images, layer_index: int,
                         chunk: int = 4096) -> np.ndarray:
    """(samples, units) pre-activation matrix for one layer, streamed in
    fixed-order chunks (deterministic)."""
    if layer_index not in net.regularized_indices:
        raise ValueError(f"layer {layer_index} is not a dense/conv layer")
    parts = []
    for start in range(0, images.shape[0], chunk):
        _, preacts = net.forward(images[start:start + chunk], training=False)
        parts.append(_unit_matrix(preacts[layer_index]))
    return np.concatenate(parts, axis=0)


def unit_conditional_entropies(net: Network, dataset: Dataset, layer_index: int,
                               bins: int = 64) -> list[UnitEntropyRecord]:
    """Histogram H(Y|C) and H(Y|Z) estimates for every unit of a layer.

    H(Y|C) partitions the sample by label; classes with fewer than
    MIN_CLASS_SAMPLES samples are excluded (and recorded) and the class
    weights renormalized. H(Y|Z) weights every sample by its posterior mode
    responsibility. All estimates are differential (nats); constant units
    come back as flagged zeros.
    """
    values = layer_preactivations(net, dataset.images, layer_index)
    labels = dataset.labels
    spatial = values.shape[0] // len(dataset)
    if spatial > 1:  # conv layers fold spatial positions into the sample axis
        labels = np.repeat(labels, spatial)

    records = []
    for u in range(values.shape[1]):
        y = values[:, u]
        marginal = sample_entropy(y, bins=bins)
        if marginal.degenerate:
            records.append(UnitEntropyRecord(
                layer=layer_index, unit=u, h_given_class=0.0, h_given_latent=0.0,
                h_marginal=0.0, sample_count=y.size, bin_count=bins,
                degenerate=True))
            continue

        excluded = []
        class_terms = []
        for c in range(dataset.num_classes):
            yc = y[labels == c]
            if yc.size < MIN_CLASS_SAMPLES:
                excluded.append(c)
                continue
            class_terms.append((yc.size, sample_entropy(yc, bins=bins).differential,
                                float(np.var(yc))))
        total = sum(n for n, _, _ in class_terms)
        h_class = sum(n / total * h for n, h, _ in class_terms) if total else 0.0
        b_class = sum(n / total * _safe_bound(v) for n, _, v in class_terms) \
            if total else float("-inf")

        post0, post1 = presence_posterior(y)
        h_latent = 0.0
        b_latent = 0.0
        rng_full = (y.min(), y.max())
        for w in (post0, post1):
            prior = float(w.mean())
            if prior <= 1e-12:
                continue
            est = weighted_sample_entropy(y, w, bins=bins, bin_range=rng_full)
            h_latent += prior * est.differential
            wn = w / w.sum()
            mu = float(np.dot(wn, y))
            b_latent += prior * _safe_bound(float(np.dot(wn, (y - mu) ** 2)))

        records.append(UnitEntropyRecord(
            layer=layer_index, unit=u, h_given_class=float(h_class),
            h_given_latent=float(h_latent), h_marginal=marginal.differential,
            sample_count=y.size, bin_count=bins,
            h_given_class_bound=float(b_class), h_given_latent_bound=float(b_latent),
            h_marginal_bound=_safe_bound(float(np.var(y))),
            excluded_classes=excluded))
    return records


def mean_layer_entropies(net: Network, dataset: Dataset, layer_index: int,
                         bins: int = 64) -> tuple[float, float]:
    """Layer means of the per-unit H(Y|C) and H(Y|Z) estimates."""
    records = unit_conditional_entropies(net, dataset, layer_index, bins=bins)
    h_c = float(np.mean([r.h_given_class for r in records]))
    h_z = float(np.mean([r.h_given_latent for r in records]))
    return h_c, h_z
