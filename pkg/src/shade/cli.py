"""Command-line surface: train, sweep, diagnose, verify, binarize, eval.

Exit codes: 0 success, 1 usage/configuration error, 2 verification failure,
3 numeric abort during training.
"""

from __future__ import annotations

import argparse
import os
import sys

from .checkpoint import load_checkpoint
from .config import ExperimentConfig
from .experiment import (BETA_GRID_FULL, NumericAbort, build_network, evaluate,
                         load_dataset_splits, run_binarize, run_sweep,
                         run_training, write_csv, _flatten_if_needed)
from .datasets import Dataset, SubsetSpec, stratified_subset
from .monitor import unit_conditional_entropies
from .verify import run_scope

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def _load_matching_checkpoint(path, cfg: ExperimentConfig, train: Dataset):
    """Load a checkpoint and reject it if its parameter-bearing layers do not
    match the architecture the config describes."""
    net, state = load_checkpoint(path)
    expected = build_network(cfg, _flatten_if_needed(cfg, train.images[:1]).shape[1:]
                             if cfg.architecture == "mlp" else train.input_shape,
                             train.num_classes)
    got = [s for s in net.arch_spec() if s["kind"] in ("dense", "conv2d")]
    want = [s for s in expected.arch_spec() if s["kind"] in ("dense", "conv2d")]
    if got != want:
        raise ValueError(f"checkpoint architecture {got} does not match "
                         f"config architecture {want}")
    return net, state


def _split_dataset(cfg: ExperimentConfig, name: str) -> Dataset:
    train, val, test = load_dataset_splits(cfg)
    if name == "train":
        if cfg.subset is not None:
            seed = cfg.seed if cfg.subset.seed is None else cfg.subset.seed
            train = stratified_subset(train, SubsetSpec(cfg.subset.size, seed))
        return train
    return {"val": val, "test": test}[name]


def cmd_train(args) -> int:
    cfg = _load_config(args)
    try:
        result = run_training(cfg, out_dir=cfg.output_dir, log=print)
    except NumericAbort as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    if result.shade_state is not None:
        with open(os.path.join(cfg.output_dir, "shade_state.csv"), "w",
                  newline="\n") as f:
            f.write(result.shade_state.to_csv())
    print(f"final: val_accuracy={result.val_accuracy!r} "
          f"test_accuracy={result.test_accuracy!r}")
    print(f"outputs in {cfg.output_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    train, val, test = load_dataset_splits(cfg)
    net, _ = _load_matching_checkpoint(args.checkpoint, cfg, train)
    for name, ds in (("val", val), ("test", test)):
        loss, acc = evaluate(net, cfg, ds)
        print(f"{name}: loss={loss!r} accuracy={acc!r}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    grid = None
    if args.grid:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
        if not grid:
            print("error: empty sweep grid", file=sys.stderr)
            return EXIT_USAGE
    try:
        result = run_sweep(cfg, grid=grid if grid is not None else BETA_GRID_FULL)
    except NumericAbort as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows = []
    for beta, val_acc in result.entries:
        selected = int(beta == result.best_beta)
        rows.append([beta, val_acc, selected,
                     result.test_accuracy if selected else ""])
    write_csv(os.path.join(cfg.output_dir, "sweep.csv"),
              ["beta", "val_accuracy", "selected", "test_accuracy"], rows)
    print(f"selected beta={result.best_beta!r} "
          f"val_accuracy={result.best_val_accuracy!r} "
          f"test_accuracy={result.test_accuracy!r}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _load_config(args)
    dataset = _split_dataset(cfg, args.split)
    if cfg.architecture == "mlp":
        dataset = Dataset(_flatten_if_needed(cfg, dataset.images), dataset.labels,
                          num_classes=dataset.num_classes)
    net, _ = _load_matching_checkpoint(args.checkpoint,
                                       cfg, _split_dataset(cfg, "train"))
    rows = []
    for i in net.regularized_indices:
        for rec in unit_conditional_entropies(net, dataset, i,
                                              bins=cfg.monitor_bins):
            for quantity, est, bound in (
                    ("h_given_class", rec.h_given_class, rec.h_given_class_bound),
                    ("h_given_latent", rec.h_given_latent, rec.h_given_latent_bound),
                    ("h_marginal", rec.h_marginal, rec.h_marginal_bound)):
                rows.append([quantity, rec.layer, rec.unit, est, bound,
                             bound - est, rec.sample_count, rec.bin_count])
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "entropy_report.csv")
    write_csv(path, ["quantity", "layer", "unit", "estimate", "bound", "gap",
                     "K", "bins"], rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        results = run_scope(args.scope)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    for r in results:
        print(r.line())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, f"verify_{args.scope}.csv"),
                  ["check", "ok", "detail"],
                  [[r.name, int(r.ok), r.detail] for r in results])
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFICATION


def cmd_binarize(args) -> int:
    cfg = _load_config(args)
    train = _split_dataset(cfg, "train")
    test = _split_dataset(cfg, "test")
    if cfg.architecture == "mlp":
        train = Dataset(_flatten_if_needed(cfg, train.images), train.labels,
                        num_classes=train.num_classes)
        test = Dataset(_flatten_if_needed(cfg, test.images), test.labels,
                       num_classes=test.num_classes)
    net, _ = _load_matching_checkpoint(args.checkpoint, cfg, train)
    try:
        report, bin_net = run_binarize(cfg, net, train, test,
                                       layer_index=args.layer,
                                       fine_tune_epochs=args.epochs)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_csv(os.path.join(cfg.output_dir, "binarize.csv"),
              ["layer", "threshold", "accuracy_before", "accuracy_raw",
               "accuracy_after"],
              [[report.layer_index, report.threshold, report.accuracy_before,
                report.accuracy_raw, report.accuracy_after]])
    from .checkpoint import save_checkpoint
    save_checkpoint(os.path.join(cfg.output_dir, "binarized_checkpoint.npz"), bin_net)
    print(f"layer {report.layer_index}: threshold={report.threshold!r} "
          f"before={report.accuracy_before!r} raw={report.accuracy_raw!r} "
          f"after={report.accuracy_after!r}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="shade",
                     description="Entropy-regularized training and verification")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output directory override")

    p = sub.add_parser("train", help="train a model per the config")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid-sweep the regularization weight")
    add_common(p)
    p.add_argument("--grid", default=None,
                   help="comma-separated weights (default: the {1,5}e-1..e-7 grid)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="per-unit conditional entropy report")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("verify", help="run a self-contained verification suite")
    p.add_argument("--scope", required=True,
                   choices=("gradients", "algorithm1", "bounds", "dpi",
                            "reconstruction", "all"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("binarize", help="binary-activation replacement experiment")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", type=int, default=None,
                   help="dense/conv layer index (default: last hidden)")
    p.add_argument("--epochs", type=int, default=10, help="fine-tuning epochs")
    p.set_defaults(func=cmd_binarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        # config problems, bad paths, malformed JSON: all usage errors
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
