"""SHADE: entropy-regularized neural network training and verification toolkit.

The package bundles a small float64 numpy-backed neural network engine
(dense/conv layers, SGD-momentum and Adam), the SHADE regularizer built on a
per-neuron Bernoulli presence code with moving-average mode statistics,
baseline regularizers (weight decay, dropout), discrete and histogram-based
entropy tooling with bound verifiers, dataset ingestion/generation, and a CLI
for training, sweeps, diagnostics and verification.
"""

__version__ = "0.1.0"

from .numeric import Rng, matmul, reduce_mean, reduce_var, rng_gaussian

__all__ = [
    "Rng",
    "matmul",
    "reduce_mean",
    "reduce_var",
    "rng_gaussian",
    "__version__",
]
