"""Experiment runner: training loop, grid sweep, binarization protocol.

Per-batch order: forward -> classification loss + weighted regularizer ->
backward (regularizer gradients injected at the cached pre-activations) ->
optimizer step -> moving-average update. The moving averages therefore lag
one batch behind the parameters: each batch's penalty is measured against
the statistics accumulated through the previous batch.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .baseline_reg import weight_decay_loss
from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .datasets import (Dataset, SubsetSpec, batch_iterator, load_idx,
                       make_synthetic, stratified_subset)
from .losses import accuracy, cross_entropy
from .monitor import mean_layer_entropies
from .network import Network, binarize_layer, build_convnet, build_mlp
from .numeric import Rng
from .optim import make_optimizer
from .shade_reg import ShadeState

# regularization-weight grids for validation sweeps: {1,5} x 10^-i and the
# coarser {10^-i} ladder, both ascending so ties resolve to the smaller value
BETA_GRID_FULL = sorted(s * 10.0 ** -i for i in range(1, 8) for s in (1.0, 5.0))
BETA_GRID_COARSE = sorted(10.0 ** -i for i in range(1, 8))

# fixed subsystem stream keys derived from the run seed
_STREAM_INIT = 1
_STREAM_DROPOUT = 2
_STREAM_BATCHES = 3
_STREAM_FINETUNE = 4


class NumericAbort(RuntimeError):
    """Raised when the training objective stops being finite."""


def load_dataset_splits(cfg: ExperimentConfig):
    """Build (train, val, test) datasets from the config."""
    ds = cfg.dataset
    if ds.kind == "synthetic":
        s = ds.synthetic
        common = dict(classes=s.classes, seed=s.seed, nuisance_dims=s.nuisance_dims,
                      signal_dims=s.signal_dims, signal_scale=s.signal_scale,
                      signal_noise=s.signal_noise, texture_scale=s.texture_scale,
                      texture_rank=s.texture_rank, center_scale=s.center_scale)
        train = make_synthetic(s.kind, n=s.train_size, split="train", **common)
        val = make_synthetic(s.kind, n=s.val_size, split="val", **common)
        test = make_synthetic(s.kind, n=s.test_size, split="test", **common)
        return train, val, test
    spec = ds.idx
    full = load_idx(spec.train_images, spec.train_labels)
    test = load_idx(spec.test_images, spec.test_labels)
    test = Dataset(test.images, test.labels, split="test", num_classes=full.num_classes)
    if spec.val_size:
        n = len(full) - spec.val_size
        val = Dataset(full.images[n:], full.labels[n:], split="val",
                      num_classes=full.num_classes)
        train = Dataset(full.images[:n], full.labels[:n], split="train",
                        num_classes=full.num_classes)
    else:
        train = full
        val = Dataset(full.images[:0], full.labels[:0], split="val",
                      num_classes=full.num_classes)
    return train, val, test


def build_network(cfg: ExperimentConfig, input_shape, num_classes: int) -> Network:
    init_rng = Rng(cfg.seed).split(_STREAM_INIT)
    dropout_rng = Rng(cfg.seed).split(_STREAM_DROPOUT)
    rates = None
    if cfg.regularizer.kind == "dropout" and cfg.regularizer.dropout_rates:
        given = list(cfg.regularizer.dropout_rates)
        # rates apply to the last hidden layers when fewer are given
        rates = [0.0] * len(cfg.hidden_sizes)
        for j, r in enumerate(reversed(given)):
            if j < len(rates):
                rates[len(rates) - 1 - j] = r
    if cfg.architecture == "mlp":
        dim = int(np.prod(input_shape))
        return build_mlp(dim, cfg.hidden_sizes, num_classes, init_rng,
                         dropout_rates=rates, dropout_rng=dropout_rng)
    if len(input_shape) != 3:
        raise ValueError(f"convnet needs (channels, h, w) inputs, got {input_shape}")
    return build_convnet(input_shape[0], input_shape[1:], num_classes, init_rng,
                         channels=tuple(cfg.conv_channels))


def _flatten_if_needed(cfg: ExperimentConfig, images: np.ndarray) -> np.ndarray:
    if cfg.architecture == "mlp" and images.ndim > 2:
        return images.reshape(images.shape[0], -1)
    return images


def evaluate(net: Network, cfg: ExperimentConfig, dataset: Dataset,
             batch: int = 512):
    """Mean classification loss and accuracy, deterministic fixed-order pass."""
    if len(dataset) == 0:
        return float("nan"), float("nan")
    total_loss = 0.0
    correct = 0.0
    for start in range(0, len(dataset), batch):
        x = _flatten_if_needed(cfg, dataset.images[start:start + batch])
        yb = dataset.labels[start:start + batch]
        logits, _ = net.forward(x, training=False)
        loss, _ = cross_entropy(logits, yb)
        total_loss += loss * len(yb)
        correct += accuracy(logits, yb) * len(yb)
    return total_loss / len(dataset), correct / len(dataset)


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    test_accuracy: float
    omega: float
    layer_entropies: dict = field(default_factory=dict)  # layer -> (H(Y|C), H(Y|Z))


def metrics_header(layer_indices) -> list[str]:
    cols = ["epoch", "train_loss", "train_accuracy", "val_accuracy",
            "test_accuracy", "omega"]
    for i in layer_indices:
        cols += [f"h_class_l{i}", f"h_latent_l{i}"]
    return cols


def format_cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(format_cell(v) for v in row) + "\n")


def _metrics_rows_for_csv(rows, layer_indices):
    out = []
    for r in rows:
        cells = [r.epoch, r.train_loss, r.train_accuracy, r.val_accuracy,
                 r.test_accuracy, r.omega]
        for i in layer_indices:
            h_c, h_z = r.layer_entropies.get(i, (float("nan"), float("nan")))
            cells += [h_c, h_z]
        out.append(cells)
    return out


@dataclass
class TrainResult:
    config: ExperimentConfig
    net: Network
    shade_state: ShadeState | None
    rows: list
    train: Dataset
    val: Dataset
    test: Dataset
    val_accuracy: float
    test_accuracy: float


def run_training(cfg: ExperimentConfig, out_dir: str | None = None,
                 eval_test: bool = True, monitor: bool = True,
                 eval_each_epoch: bool = True, log=None) -> TrainResult:
    """Train a model per the config; optionally write metrics + checkpoints.

    A checkpoint is saved at initialization and after every completed epoch,
    so a numeric abort (non-finite loss) always leaves the last good state
    on disk.
    """
    started = time.monotonic()
    train, val, test = load_dataset_splits(cfg)
    if cfg.subset is not None:
        subset_seed = cfg.seed if cfg.subset.seed is None else cfg.subset.seed
        train = stratified_subset(train, SubsetSpec(cfg.subset.size, subset_seed))

    net = build_network(cfg, _flatten_if_needed(cfg, train.images[:1]).shape[1:]
                        if cfg.architecture == "mlp" else train.input_shape,
                        train.num_classes)
    reg = cfg.regularizer
    state = None
    if reg.kind == "shade":
        state = ShadeState(net.unit_counts(), decay=reg.decay,
                           layer_weights=reg.layer_weights or None, beta=reg.beta)
    optimizer = make_optimizer(cfg.optimizer.kind, cfg.optimizer.learning_rate,
                               momentum=cfg.optimizer.momentum,
                               decay=cfg.optimizer.decay)
    batch_rng = Rng(cfg.seed).split(_STREAM_BATCHES)
    layer_indices = net.regularized_indices

    def checkpoint_path():
        return os.path.join(out_dir, "checkpoint.npz") if out_dir else None

    def flush(rows):
        if out_dir:
            write_csv(os.path.join(out_dir, "metrics.csv"),
                      metrics_header(layer_indices),
                      _metrics_rows_for_csv(rows, layer_indices))

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(checkpoint_path(), net, state)
        flush([])

    rows: list[MetricsRow] = []
    val_acc = float("nan")
    test_acc = float("nan")
    for epoch in range(1, cfg.epochs + 1):
        epoch_loss = 0.0
        epoch_omega = 0.0
        epoch_correct = 0.0
        seen = 0
        for x, yb in batch_iterator(train, cfg.batch_size, batch_rng):
            x = _flatten_if_needed(cfg, x)
            logits, preacts = net.forward(x, training=True)
            ce, dlogits = cross_entropy(logits, yb)
            omega = 0.0
            preact_grads = None
            wd_grads = None
            if state is not None:
                omega = state.penalty(preacts)
                if reg.beta > 0.0:
                    preact_grads = {i: reg.beta * g for i, g in
                                    state.penalty_preact_grads(preacts).items()}
            elif reg.kind == "weight-decay":
                omega, wd_grads = weight_decay_loss(net)
            total = ce + reg.beta * omega
            if not np.isfinite(total):
                flush(rows)
                raise NumericAbort(f"non-finite loss at epoch {epoch} "
                                   f"(ce={ce!r}, omega={omega!r}); "
                                   "last-good checkpoint preserved")
            net.backward(dlogits, preact_grads)
            if wd_grads is not None and reg.beta > 0.0:
                for (i, name), g in wd_grads.items():
                    net.layers[i].grads[name] += reg.beta * g
            optimizer.step(net)
            if state is not None:
                state.update(preacts)
            k = len(yb)
            epoch_loss += total * k
            epoch_omega += omega * k
            epoch_correct += accuracy(logits, yb) * k
            seen += k

        if eval_each_epoch:
            _, val_acc = evaluate(net, cfg, val)
            if eval_test:
                _, test_acc = evaluate(net, cfg, test)
        entropies = {}
        if monitor:
            mtrain = Dataset(_flatten_if_needed(cfg, train.images), train.labels,
                             num_classes=train.num_classes) \
                if cfg.architecture == "mlp" else train
            for i in layer_indices:
                entropies[i] = mean_layer_entropies(net, mtrain, i,
                                                    bins=cfg.monitor_bins)
        rows.append(MetricsRow(epoch=epoch, train_loss=epoch_loss / seen,
                               train_accuracy=epoch_correct / seen,
                               val_accuracy=val_acc, test_accuracy=test_acc,
                               omega=epoch_omega / seen,
                               layer_entropies=entropies))
        if out_dir:
            save_checkpoint(checkpoint_path(), net, state)
            flush(rows)
        if log:
            log(f"epoch {epoch}: loss={epoch_loss / seen:.4f} "
                f"val={val_acc:.4f} test={test_acc:.4f}")

    if cfg.epochs == 0 or not eval_each_epoch:
        _, val_acc = evaluate(net, cfg, val)
        if eval_test:
            _, test_acc = evaluate(net, cfg, test)
    if out_dir:
        with open(os.path.join(out_dir, "run.log"), "a") as f:
            f.write(f"wall_clock_seconds={time.monotonic() - started:.3f}\n")
    return TrainResult(config=cfg, net=net, shade_state=state, rows=rows,
                       train=train, val=val, test=test,
                       val_accuracy=val_acc, test_accuracy=test_acc)


def with_beta(cfg: ExperimentConfig, beta: float) -> ExperimentConfig:
    reg = dataclasses.replace(cfg.regularizer, beta=beta)
    return dataclasses.replace(cfg, regularizer=reg)


@dataclass
class SweepResult:
    entries: list  # (beta, val_accuracy)
    best_beta: float
    best_val_accuracy: float
    test_accuracy: float
    best: TrainResult


def run_sweep(cfg: ExperimentConfig, grid=None) -> SweepResult:
    """Train one model per grid point, select on validation, report its test
    accuracy only. Ties resolve to the smaller weight."""
    if grid is None:
        grid = BETA_GRID_FULL
    grid = sorted(float(b) for b in grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    if len(load_dataset_splits(cfg)[1]) == 0:
        raise ValueError("sweep needs a validation split")
    entries = []
    best = None
    best_beta = None
    for beta in grid:
        result = run_training(with_beta(cfg, beta), eval_test=False, monitor=False,
                              eval_each_epoch=False)
        entries.append((beta, result.val_accuracy))
        if best is None or result.val_accuracy > best.val_accuracy:
            best = result
            best_beta = beta
    _, test_acc = evaluate(best.net, cfg, best.test)
    return SweepResult(entries=entries, best_beta=best_beta,
                       best_val_accuracy=best.val_accuracy,
                       test_accuracy=test_acc, best=best)


@dataclass
class BinarizeReport:
    layer_index: int
    threshold: float
    accuracy_before: float
    accuracy_raw: float      # after replacement, before fine-tuning
    accuracy_after: float    # after fine-tuning the layers above


def run_binarize(cfg: ExperimentConfig, net: Network, train: Dataset,
                 test: Dataset, layer_index: int | None = None,
                 fine_tune_epochs: int = 10) -> tuple[BinarizeReport, Network]:
    """Swap a trained layer's ReLU for the calibrated two-valued activation
    and fine-tune the layers above it (frozen below), at a tenth of the
    configured learning rate. Defaults to the last hidden dense/conv layer."""
    if layer_index is None:
        hidden = [i for i in net.regularized_indices[:-1]]
        if not hidden:
            raise ValueError("network has no hidden dense/conv layer to binarize")
        layer_index = hidden[-1]
    _, before = evaluate(net, cfg, test)
    calib = _flatten_if_needed(cfg, train.images)
    bin_net, threshold = binarize_layer(net, layer_index, calib)
    _, raw = evaluate(bin_net, cfg, test)

    optimizer = make_optimizer(cfg.optimizer.kind,
                               cfg.optimizer.learning_rate * 0.1,
                               momentum=cfg.optimizer.momentum,
                               decay=cfg.optimizer.decay)
    rng = Rng(cfg.seed).split(_STREAM_FINETUNE)
    for _ in range(fine_tune_epochs):
        for x, yb in batch_iterator(train, cfg.batch_size, rng):
            x = _flatten_if_needed(cfg, x)
            logits, _ = bin_net.forward(x, training=True)
            _, dlogits = cross_entropy(logits, yb)
            bin_net.backward(dlogits)
            optimizer.step(bin_net)
    _, after = evaluate(bin_net, cfg, test)
    report = BinarizeReport(layer_index=layer_index, threshold=threshold,
                            accuracy_before=before, accuracy_raw=raw,
                            accuracy_after=after)
    return report, bin_net


def config_digest(cfg: ExperimentConfig) -> str:
    """Stable JSON rendering of a config (for logs and reports)."""
    def unpack(v):
        if dataclasses.is_dataclass(v):
            return {k: unpack(getattr(v, k)) for k in v.__dataclass_fields__}
        if isinstance(v, dict):
            return {str(k): unpack(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [unpack(x) for x in v]
        return v
    return json.dumps(unpack(cfg), sort_keys=True)
