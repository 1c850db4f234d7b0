"""Optimizers: SGD with momentum and Adam, with per-batch learning-rate decay."""

from __future__ import annotations

import numpy as np

from .network import Network


class Optimizer:
    def step(self, net: Network) -> None:
        raise NotImplementedError

    def _iter_updates(self, net: Network):
        for i, name, param in net.parameters():
            if net.layers[i].frozen:
                continue
            grad = net.layers[i].grads.get(name)
            if grad is None:
                raise RuntimeError(f"no gradient for layer {i} parameter {name!r}; "
                                   "run backward first")
            yield (i, name), param, grad


class SgdMomentum(Optimizer):
    def __init__(self, learning_rate: float, momentum: float = 0.9, decay: float = 1.0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.decay = decay
        self._velocity: dict = {}

    def step(self, net: Network) -> None:
        for key, param, grad in self._iter_updates(net):
            v = self._velocity.get(key)
            if v is None:
                v = np.zeros_like(param)
                self._velocity[key] = v
            v *= self.momentum
            v += grad
            param -= self.learning_rate * v
        self.learning_rate *= self.decay


class Adam(Optimizer):
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, decay: float = 1.0):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay = decay
        self._m: dict = {}
        self._v: dict = {}
        self._t: dict = {}

    def step(self, net: Network) -> None:
        for key, param, grad in self._iter_updates(net):
            if key not in self._m:
                self._m[key] = np.zeros_like(param)
                self._v[key] = np.zeros_like(param)
                self._t[key] = 0
            self._t[key] += 1
            t = self._t[key]
            m, v = self._m[key], self._v[key]
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            param -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        self.learning_rate *= self.decay


def make_optimizer(kind: str, learning_rate: float, momentum: float = 0.9,
                   decay: float = 1.0) -> Optimizer:
    if kind == "sgd-momentum":
        return SgdMomentum(learning_rate, momentum=momentum, decay=decay)
    if kind == "adam":
        return Adam(learning_rate, decay=decay)
    raise ValueError(f"unknown optimizer kind {kind!r}")
