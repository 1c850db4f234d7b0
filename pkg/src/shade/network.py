"""Network container: ordered layers, the forward/backward contract, and the
binary-activation replacement operation."""

from __future__ import annotations

import numpy as np

from .layers import (BinaryActivation, Conv2d, Dense, Dropout, Flatten, Layer,
                     MaxPool2d, ReLU)
from .numeric import Rng, as_tensor


class Network:
    """Ordered sequence of layers.

    ``forward`` returns the class scores together with the cached
    pre-activation of every dense/conv layer (the variable regularizers
    observe, taken before the following nonlinearity). ``backward`` may only
    be called after a forward pass on the same batch.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)
        self._forward_done = False

    @property
    def regularized_indices(self) -> list[int]:
        """Indices of layers whose output is a pre-activation with units."""
        return [i for i, l in enumerate(self.layers) if isinstance(l, (Dense, Conv2d))]

    def unit_counts(self) -> dict[int, int]:
        return {i: self.layers[i].unit_count for i in self.regularized_indices}

    def forward(self, x, training: bool = False):
        """Run the batch through all layers.

        Returns (logits, pre_activations) where pre_activations maps the
        layer index of each dense/conv layer to its output tensor.
        """
        out = as_tensor(x)
        preacts = {}
        for i, layer in enumerate(self.layers):
            out = layer.forward(out, training=training)
            if isinstance(layer, (Dense, Conv2d)):
                preacts[i] = out
        self._forward_done = True
        return out, preacts

    def backward(self, grad_logits, preact_grads: dict[int, np.ndarray] | None = None):
        """Backpropagate the objective gradient through all layers.

        ``preact_grads`` carries additional gradient contributions (e.g. a
        regularizer's) with respect to the cached pre-activations; each is
        added where the reverse sweep passes that layer's output, so the
        total objective gradient is the classification gradient plus the
        weighted regularizer gradient everywhere below.
        """
        if not self._forward_done:
            raise RuntimeError("backward called before forward")
        g = as_tensor(grad_logits)
        for i in reversed(range(len(self.layers))):
            if preact_grads and i in preact_grads:
                g = g + preact_grads[i]
            g = self.layers[i].backward(g)
        self._forward_done = False
        return g

    def parameters(self):
        """Yield (layer_index, name, array) for every parameter."""
        for i, layer in enumerate(self.layers):
            for name, value in layer.params().items():
                yield i, name, value

    def clone(self) -> "Network":
        net = Network([_layer_from_spec(l.spec()) for l in self.layers])
        for layer, other in zip(net.layers, self.layers):
            for name, value in other.params().items():
                layer.params()[name][...] = value
            layer.frozen = other.frozen
            if isinstance(layer, Dropout):
                layer.rng = other.rng
        return net

    def arch_spec(self) -> list[dict]:
        return [l.spec() for l in self.layers]


def _layer_from_spec(spec: dict) -> Layer:
    kind = spec["kind"]
    if kind == "dense":
        return Dense(spec["in_features"], spec["out_features"])
    if kind == "conv2d":
        return Conv2d(spec["in_channels"], spec["out_channels"],
                      spec["kernel_size"], spec["padding"])
    if kind == "relu":
        return ReLU()
    if kind == "maxpool2d":
        return MaxPool2d()
    if kind == "flatten":
        return Flatten()
    if kind == "dropout":
        return Dropout(spec["rate"])
    if kind == "binary-activation":
        return BinaryActivation(spec["threshold"])
    raise ValueError(f"unknown layer kind {kind!r}")


def network_from_arch(arch: list[dict]) -> Network:
    return Network([_layer_from_spec(s) for s in arch])


def build_mlp(input_dim: int, hidden_sizes, n_classes: int, rng: Rng,
              dropout_rates=None, dropout_rng: Rng | None = None) -> Network:
    """Three-dense-layer MLP (two hidden + logits), ReLU activations.

    ``dropout_rates`` gives one rate per hidden layer (0 disables); dropout
    is inserted after the corresponding ReLU.
    """
    sizes = list(hidden_sizes)
    layers: list[Layer] = []
    prev = input_dim
    for j, h in enumerate(sizes):
        layers.append(Dense(prev, h, rng))
        layers.append(ReLU())
        rate = 0.0 if dropout_rates is None else float(dropout_rates[j])
        if rate > 0.0:
            layers.append(Dropout(rate, dropout_rng))
        prev = h
    layers.append(Dense(prev, n_classes, rng))
    return Network(layers)


def build_convnet(in_channels: int, image_hw, n_classes: int, rng: Rng,
                  channels=(64, 64, 64)) -> Network:
    """Three conv+pool stages (5x5 pad 2, then 3x3 pad 1 twice) + dense head."""
    c1, c2, c3 = channels
    h, w = image_hw
    layers: list[Layer] = [
        Conv2d(in_channels, c1, 5, padding=2, rng=rng), ReLU(), MaxPool2d(),
        Conv2d(c1, c2, 3, padding=1, rng=rng), ReLU(), MaxPool2d(),
        Conv2d(c2, c3, 3, padding=1, rng=rng), ReLU(), MaxPool2d(),
        Flatten(),
    ]
    fh, fw = h // 2 // 2 // 2, w // 2 // 2 // 2
    layers.append(Dense(c3 * fh * fw, n_classes, rng))
    return Network(layers)


def binarize_layer(net: Network, layer_index: int, calibration_data) -> tuple[Network, float]:
    """Replace the ReLU above ``layer_index`` with a calibrated binary activation.

    The threshold is the mean of the strictly positive pre-activation values
    of that layer over the calibration data. Layers up to and including the
    target are frozen so later fine-tuning only touches the top of the
    network. Returns (new network, threshold).
    """
    if layer_index not in net.regularized_indices:
        raise ValueError(f"layer {layer_index} is not a dense/conv layer")
    if layer_index + 1 >= len(net.layers) or not isinstance(net.layers[layer_index + 1], ReLU):
        raise ValueError(f"layer {layer_index} is not followed by a ReLU")
    calibration_data = as_tensor(calibration_data)
    if calibration_data.shape[0] == 0:
        raise ValueError("calibration data is empty")
    _, preacts = net.forward(calibration_data, training=False)
    y = preacts[layer_index]
    positive = y[y > 0]
    if positive.size == 0:
        raise ValueError("no positive pre-activation observed; threshold undefined")
    threshold = float(positive.mean())

    new_net = net.clone()
    new_net.layers[layer_index + 1] = BinaryActivation(threshold)
    for i in range(layer_index + 2):
        new_net.layers[i].frozen = True
    return new_net, threshold
