"""Classification head: softmax + cross-entropy with its gradient."""

from __future__ import annotations

import numpy as np

from .numeric import as_tensor


def softmax(logits):
    z = as_tensor(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label].

    Returns (loss, grad wrt logits). Computed through log-sum-exp so large
    logits stay finite.
    """
    z = as_tensor(logits)
    if z.ndim != 2:
        raise ValueError(f"cross_entropy expects (batch, classes) logits, got {z.shape}")
    labels = np.asarray(labels)
    n, k = z.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def accuracy(logits, labels) -> float:
    preds = as_tensor(logits).argmax(axis=1)
    return float((preds == np.asarray(labels)).mean())
