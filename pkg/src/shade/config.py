"""Experiment configuration: strict JSON parsing into typed records.

Unknown keys are rejected everywhere so a typo in a hyperparameter name
fails loudly instead of silently training with a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .baseline_reg import RegularizerConfig


def _check_keys(d: dict, allowed, where: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}; "
                         f"allowed: {sorted(allowed)}")


@dataclass
class OptimizerSpec:
    kind: str = "adam"
    learning_rate: float = 0.001
    momentum: float = 0.9
    decay: float = 1.0  # multiplicative, applied after every batch

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerSpec":
        _check_keys(d, ("kind", "learning_rate", "momentum", "decay"), "optimizer")
        spec = cls(**d)
        if spec.kind not in ("adam", "sgd-momentum"):
            raise ValueError(f"unknown optimizer kind {spec.kind!r}")
        return spec


@dataclass
class SyntheticSpec:
    kind: str = "textured-digits-proxy"
    classes: int = 10
    train_size: int = 10000
    val_size: int = 2000
    test_size: int = 2000
    seed: int = 0
    nuisance_dims: int = 48
    signal_dims: int = 16
    signal_scale: float = 1.0
    signal_noise: float = 0.8
    texture_scale: float = 6.0
    texture_rank: int = 6
    center_scale: float = 3.0

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        _check_keys(d, cls.__dataclass_fields__, "dataset.synthetic")
        return cls(**d)


@dataclass
class IdxSpec:
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    val_size: int = 0  # carved off the end of the train set

    @classmethod
    def from_dict(cls, d: dict) -> "IdxSpec":
        _check_keys(d, cls.__dataclass_fields__, "dataset.idx")
        return cls(**d)


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    idx: IdxSpec | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        _check_keys(d, ("kind", "synthetic", "idx"), "dataset")
        kind = d.get("kind", "synthetic")
        if kind == "synthetic":
            return cls(kind=kind,
                       synthetic=SyntheticSpec.from_dict(d.get("synthetic", {})))
        if kind == "idx":
            if "idx" not in d:
                raise ValueError("dataset.kind 'idx' requires a dataset.idx block")
            return cls(kind=kind, idx=IdxSpec.from_dict(d["idx"]))
        raise ValueError(f"unknown dataset kind {kind!r}")


@dataclass
class SubsetConfig:
    size: int = 0
    seed: int | None = None  # None: follow the run seed

    @classmethod
    def from_dict(cls, d: dict) -> "SubsetConfig":
        _check_keys(d, ("size", "seed"), "subset")
        return cls(**d)


@dataclass
class ExperimentConfig:
    """Everything that determines a run; (config, code version) fixes outputs."""

    architecture: str = "mlp"
    hidden_sizes: list = field(default_factory=lambda: [64, 32])
    conv_channels: list = field(default_factory=lambda: [8, 8, 8])
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    subset: SubsetConfig | None = None
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    epochs: int = 10
    batch_size: int = 50
    seed: int = 0
    output_dir: str = "runs/default"
    monitor_bins: int = 64

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys(d, cls.__dataclass_fields__, "config")
        cfg = cls()
        if "architecture" in d:
            cfg.architecture = d["architecture"]
            if cfg.architecture not in ("mlp", "convnet"):
                raise ValueError(f"unknown architecture {cfg.architecture!r}")
        if "hidden_sizes" in d:
            cfg.hidden_sizes = list(d["hidden_sizes"])
        if "conv_channels" in d:
            cfg.conv_channels = list(d["conv_channels"])
        if "dataset" in d:
            cfg.dataset = DatasetSpec.from_dict(d["dataset"])
        if d.get("subset") is not None:
            cfg.subset = SubsetConfig.from_dict(d["subset"])
        if "optimizer" in d:
            cfg.optimizer = OptimizerSpec.from_dict(d["optimizer"])
        if "regularizer" in d:
            r = dict(d["regularizer"])
            _check_keys(r, ("kind", "beta", "dropout_rates", "decay", "layer_weights"),
                        "regularizer")
            if "layer_weights" in r:
                r["layer_weights"] = {int(k): float(v)
                                      for k, v in r["layer_weights"].items()}
            cfg.regularizer = RegularizerConfig(**r)
        for key in ("epochs", "batch_size", "seed", "monitor_bins"):
            if key in d:
                setattr(cfg, key, int(d[key]))
        if "output_dir" in d:
            cfg.output_dir = d["output_dir"]
        if cfg.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {cfg.epochs}")
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))
