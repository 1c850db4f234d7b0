"""Baseline regularizers and the regularizer configuration record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Conv2d, Dense
from .network import Network

REGULARIZER_KINDS = ("none", "weight-decay", "dropout", "shade")


@dataclass
class RegularizerConfig:
    """Which regularizer to train with and how strongly.

    ``beta`` is the global weight multiplying the regularization loss;
    ``dropout_rates`` gives per-hidden-layer keep-out rates (by convention
    applied on the last hidden layers); ``decay`` and ``layer_weights``
    configure the SHADE moving averages and per-layer weights.
    """

    kind: str = "none"
    beta: float = 0.0
    dropout_rates: list = field(default_factory=list)
    decay: float = 0.8
    layer_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}; "
                             f"expected one of {REGULARIZER_KINDS}")
        if self.beta < 0:
            raise ValueError(f"regularizer weight must be >= 0, got {self.beta}")
        for r in self.dropout_rates:
            if not (0.0 <= r < 1.0):
                raise ValueError(f"dropout rate must lie in [0, 1), got {r}")


def weight_decay_loss(net: Network):
    """Half the squared norm of all weight matrices (biases excluded).

    Returns (loss, grads) where grads maps (layer_index, name) to the
    gradient array (equal to the weight itself).
    """
    loss = 0.0
    grads = {}
    for i, layer in enumerate(net.layers):
        if not isinstance(layer, (Dense, Conv2d)):
            continue
        w = layer.params()["w"]
        loss += 0.5 * float(np.sum(w * w))
        grads[(i, "w")] = w.copy()
    return loss, grads
