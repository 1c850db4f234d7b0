import numpy as np
import pytest

from shade.config import ExperimentConfig
from shade.experiment import (NumericAbort, run_binarize, run_sweep, run_training,
                              with_beta)


def tiny_config(**overrides):
    d = {
        "architecture": "mlp",
        "hidden_sizes": [12, 8],
        "dataset": {"kind": "synthetic", "synthetic": {
            "kind": "gaussian-blobs", "classes": 3, "train_size": 120,
            "val_size": 60, "test_size": 60, "seed": 0,
            "nuisance_dims": 4, "signal_dims": 6}},
        "optimizer": {"kind": "adam", "learning_rate": 0.005},
        "regularizer": {"kind": "none", "beta": 0.0},
        "epochs": 3, "batch_size": 30, "seed": 1,
    }
    d.update(overrides)
    return ExperimentConfig.from_dict(d)


def params_of(net):
    return {(i, name): p.copy() for i, name, p in net.parameters()}


def test_same_seed_reproduces_run_exactly():
    a = run_training(tiny_config(), monitor=False)
    b = run_training(tiny_config(), monitor=False)
    pa, pb = params_of(a.net), params_of(b.net)
    for key in pa:
        assert np.array_equal(pa[key], pb[key])
    assert [r.train_loss for r in a.rows] == [r.train_loss for r in b.rows]
    assert a.test_accuracy == b.test_accuracy


def test_zero_beta_shade_matches_unregularized_bit_exact():
    base = run_training(tiny_config(), monitor=False)
    shade = run_training(tiny_config(regularizer={"kind": "shade", "beta": 0.0}),
                         monitor=False)
    pb, ps = params_of(base.net), params_of(shade.net)
    for key in pb:
        assert np.array_equal(pb[key], ps[key]), key
    wd = run_training(tiny_config(regularizer={"kind": "weight-decay", "beta": 0.0}),
                      monitor=False)
    for key, value in params_of(wd.net).items():
        assert np.array_equal(pb[key], value), key


def test_zero_epochs_checkpoint_is_initialization(tmp_path):
    from shade.checkpoint import load_checkpoint
    from shade.experiment import build_network

    cfg = tiny_config(epochs=0)
    out = tmp_path / "run"
    result = run_training(cfg, out_dir=str(out), monitor=False)
    saved, _ = load_checkpoint(out / "checkpoint.npz")
    fresh = build_network(cfg, result.train.images.shape[1:],
                          result.train.num_classes)
    for (i, name, a), (_, _, b) in zip(saved.parameters(), fresh.parameters()):
        assert np.array_equal(a, b), (i, name)


def test_training_writes_metrics_and_log(tmp_path):
    out = tmp_path / "run"
    run_training(tiny_config(epochs=2), out_dir=str(out))
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("epoch,train_loss,train_accuracy,val_accuracy,"
                               "test_accuracy,omega,h_class_l0")
    assert len(lines) == 3
    assert (out / "run.log").read_text().startswith("wall_clock_seconds=")
    assert (out / "checkpoint.npz").exists()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_abort_preserves_last_good_checkpoint(tmp_path):
    # an overflowing step drives the next batch's logits to nan
    cfg = tiny_config(optimizer={"kind": "sgd-momentum", "learning_rate": 1e300},
                      epochs=5)
    out = tmp_path / "run"
    with pytest.raises(NumericAbort, match="non-finite"):
        run_training(cfg, out_dir=str(out), monitor=False)
    assert (out / "checkpoint.npz").exists()
    from shade.checkpoint import load_checkpoint
    net, _ = load_checkpoint(out / "checkpoint.npz")
    for _, _, p in net.parameters():
        assert np.all(np.isfinite(p))


def test_weight_decay_changes_trajectory():
    base = run_training(tiny_config(), monitor=False)
    wd = run_training(tiny_config(regularizer={"kind": "weight-decay", "beta": 0.1}),
                      monitor=False)
    assert not np.array_equal(params_of(base.net)[(0, "w")],
                              params_of(wd.net)[(0, "w")])


def test_dropout_configuration_inserts_layers():
    from shade.layers import Dropout
    cfg = tiny_config(regularizer={"kind": "dropout", "beta": 0.0,
                                   "dropout_rates": [0.3]})
    result = run_training(cfg, monitor=False)
    kinds = [l.kind for l in result.net.layers]
    # one rate given: applied to the last hidden layer only
    assert kinds.count("dropout") == 1
    drop = [l for l in result.net.layers if isinstance(l, Dropout)][0]
    assert drop.rate == 0.3


def test_sweep_single_point_equals_train(tmp_path):
    cfg = tiny_config(regularizer={"kind": "shade", "beta": 0.0})
    sweep = run_sweep(cfg, grid=[0.01])
    direct = run_training(with_beta(cfg, 0.01), monitor=False)
    assert sweep.best_beta == 0.01
    assert sweep.best_val_accuracy == direct.val_accuracy
    assert sweep.test_accuracy == direct.test_accuracy


def test_sweep_tie_breaks_toward_smaller_beta():
    cfg = tiny_config(regularizer={"kind": "shade", "beta": 0.0})
    # vanishing weights produce identical runs, hence an exact tie
    sweep = run_sweep(cfg, grid=[1e-18, 1e-15])
    assert sweep.entries[0][1] == sweep.entries[1][1]
    assert sweep.best_beta == 1e-18


def test_sweep_rejects_empty_grid_and_missing_val():
    cfg = tiny_config(regularizer={"kind": "shade", "beta": 0.0})
    with pytest.raises(ValueError, match="empty"):
        run_sweep(cfg, grid=[])


def test_binarize_freezes_below_and_reports(tmp_path):
    cfg = tiny_config(epochs=5)
    result = run_training(cfg, monitor=False)
    before = params_of(result.net)
    report, bin_net = run_binarize(cfg, result.net.clone(), result.train,
                                   result.test, fine_tune_epochs=3)
    assert report.layer_index == 2
    assert report.threshold > 0
    after = params_of(bin_net)
    # below and at the binarized layer: bit-identical; head may move
    assert np.array_equal(before[(0, "w")], after[(0, "w")])
    assert np.array_equal(before[(2, "w")], after[(2, "w")])
    assert 0.0 <= report.accuracy_after <= 1.0


def test_subset_applied_before_training():
    cfg = tiny_config(subset={"size": 60, "seed": 5})
    result = run_training(cfg, monitor=False)
    assert len(result.train) == 60
    assert np.all(np.bincount(result.train.labels) == 20)
