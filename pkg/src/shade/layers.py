"""Network layers with explicit forward/backward passes.

Every layer keeps whatever it needs from the last forward pass to run its
backward pass; ``backward`` must therefore be called on the same batch as the
preceding ``forward``. Parameters and their gradients are exposed as dicts so
optimizers and checkpointing can treat all layers uniformly.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numeric import Rng, as_tensor


class Layer:
    kind = "layer"
    frozen = False

    def params(self) -> dict:
        return {}

    @property
    def grads(self) -> dict:
        return getattr(self, "_grads", {})

    def forward(self, x, training: bool = False):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def spec(self) -> dict:
        """Constructor arguments needed to rebuild this layer."""
        return {"kind": self.kind}


class Dense(Layer):
    """Fully connected layer: y = x @ w + b.

    Output of this layer is the pre-activation observed by regularizers;
    the nonlinearity lives in a separate layer.
    """

    kind = "dense"

    def __init__(self, in_features: int, out_features: int, rng: Rng | None = None):
        self.in_features = in_features
        self.out_features = out_features
        if rng is not None:
            # He-style init, suited to the ReLU nets built here
            scale = np.sqrt(2.0 / in_features)
            self.w = rng.gaussian((in_features, out_features), 0.0, scale)
        else:
            self.w = np.zeros((in_features, out_features))
        self.b = np.zeros(out_features)
        self._grads = {}
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    @property
    def unit_count(self) -> int:
        return self.out_features

    def forward(self, x, training: bool = False):
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"dense layer expects (batch, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, grad_out):
        if self._x is None:
            raise RuntimeError("backward called before forward")
        grad_out = as_tensor(grad_out)
        self._grads = {"w": self._x.T @ grad_out, "b": grad_out.sum(axis=0)}
        return grad_out @ self.w.T

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features,
                "out_features": self.out_features}


class Conv2d(Layer):
    """2-d convolution (stride 1, symmetric zero padding) via im2col."""

    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 padding: int = 0, rng: Rng | None = None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        if rng is not None:
            self.w = rng.gaussian((out_channels, in_channels, kernel_size, kernel_size),
                                  0.0, np.sqrt(2.0 / fan_in))
        else:
            self.w = np.zeros((out_channels, in_channels, kernel_size, kernel_size))
        self.b = np.zeros(out_channels)
        self._grads = {}
        self._cols = None
        self._x_shape = None

    def params(self):
        return {"w": self.w, "b": self.b}

    @property
    def unit_count(self) -> int:
        # one detector per output channel; spatial positions share it
        return self.out_channels

    def forward(self, x, training: bool = False):
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"conv2d expects (batch, {self.in_channels}, h, w), got {x.shape}")
        k, p = self.kernel_size, self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        n, c, h, w = x.shape
        if h < k or w < k:
            raise ValueError(f"input {x.shape} smaller than kernel {k}x{k}")
        # (n, c, oh, ow, k, k) windows -> columns (n*oh*ow, c*k*k)
        win = sliding_window_view(x, (k, k), axis=(2, 3))
        oh, ow = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
        self._cols = cols
        self._x_shape = (n, c, h, w)
        self._out_hw = (oh, ow)
        out = cols @ self.w.reshape(self.out_channels, -1).T + self.b
        return out.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad_out):
        if self._cols is None:
            raise RuntimeError("backward called before forward")
        grad_out = as_tensor(grad_out)
        n, c, h, w = self._x_shape
        k, p = self.kernel_size, self.padding
        oh, ow = self._out_hw
        g = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_channels)
        gw = (g.T @ self._cols).reshape(self.w.shape)
        gb = g.sum(axis=0)
        self._grads = {"w": gw, "b": gb}
        # scatter column gradients back onto the (padded) input
        gcols = g @ self.w.reshape(self.out_channels, -1)
        gcols = gcols.reshape(n, oh, ow, c, k, k)
        gx = np.zeros((n, c, h, w))
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i + oh, j:j + ow] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if p:
            gx = gx[:, :, p:-p, p:-p]
        return gx

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel_size": self.kernel_size,
                "padding": self.padding}


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x, training: bool = False):
        x = as_tensor(x)
        # derivative at exactly 0 is taken as 0 (strict inequality)
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out):
        if self._mask is None:
            raise RuntimeError("backward called before forward")
        return as_tensor(grad_out) * self._mask


class MaxPool2d(Layer):
    """2x2 max pooling, stride 2; trailing odd rows/columns are dropped."""

    kind = "maxpool2d"

    def __init__(self):
        self._cache = None

    def forward(self, x, training: bool = False):
        x = as_tensor(x)
        if x.ndim != 4:
            raise ValueError(f"maxpool2d expects (batch, ch, h, w), got {x.shape}")
        n, c, h, w = x.shape
        oh, ow = h // 2, w // 2
        if oh == 0 or ow == 0:
            raise ValueError(f"input {x.shape} too small for 2x2 pooling")
        t = x[:, :, :oh * 2, :ow * 2].reshape(n, c, oh, 2, ow, 2)
        windows = t.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
        arg = windows.argmax(axis=-1)  # first max wins ties: deterministic
        self._cache = (x.shape, arg)
        return np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        (n, c, h, w), arg = self._cache
        grad_out = as_tensor(grad_out)
        oh, ow = grad_out.shape[2], grad_out.shape[3]
        gwin = np.zeros((n, c, oh, ow, 4))
        np.put_along_axis(gwin, arg[..., None], grad_out[..., None], axis=-1)
        gx = np.zeros((n, c, h, w))
        gx[:, :, :oh * 2, :ow * 2] = (
            gwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, oh * 2, ow * 2))
        return gx


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x, training: bool = False):
        x = as_tensor(x)
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        if self._shape is None:
            raise RuntimeError("backward called before forward")
        return as_tensor(grad_out).reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) during training."""

    kind = "dropout"

    def __init__(self, rate: float, rng: Rng | None = None):
        if not (0.0 <= rate < 1.0):
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, x, training: bool = False):
        x = as_tensor(x)
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if self.rng is None:
            raise RuntimeError("dropout layer used in training mode without an rng")
        keep = 1.0 - self.rate
        self._mask = self.rng.choice_bool(x.shape, keep) / keep
        return x * self._mask

    def backward(self, grad_out):
        grad_out = as_tensor(grad_out)
        if self._mask is None:
            return grad_out
        return grad_out * self._mask

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}


def dropout_forward(activations, rate: float, rng: Rng, training: bool):
    """Functional form of inverted dropout (identity in evaluation mode)."""
    layer = Dropout(rate, rng)
    return layer.forward(activations, training=training)


class BinaryActivation(Layer):
    """Two-valued activation: threshold * 1(y >= threshold).

    Replaces a ReLU after calibration; the output takes values in
    {0, threshold} only. The derivative is zero almost everywhere, so no
    gradient flows below this layer.
    """

    kind = "binary-activation"

    def __init__(self, threshold: float):
        if not threshold > 0:
            raise ValueError(f"binary activation threshold must be > 0, got {threshold}")
        self.threshold = float(threshold)

    def forward(self, x, training: bool = False):
        x = as_tensor(x)
        return np.where(x >= self.threshold, self.threshold, 0.0)

    def backward(self, grad_out):
        return np.zeros_like(as_tensor(grad_out))

    def spec(self):
        return {"kind": self.kind, "threshold": self.threshold}
