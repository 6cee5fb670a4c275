import json

import numpy as np
import pytest

from ssvepnet.errors import NumericContractError, ParameterError
from ssvepnet.evaluation import metrics_report
from ssvepnet.model import ModelConfig, NetworkParams, predict, predict_proba, save_checkpoint
from ssvepnet.signal_io import EpochSet, read_manifest
from ssvepnet.synth import SynthSpec, generate_dataset
from ssvepnet.train import (
    TrainConfig, evaluate, fit, loso_splits, run_loso, stratified_holdout, summarize,
)

TOY_MODEL = dict(n_samples=32, n_classes=3, channels=2, temporal_kernel=9, temporal_filters=4,
                 spatial_filters=4, pool=2, hidden=(16, 8))


def toy_subject(index, trials_per_class=20, noise=0.3):
    # three classes = three FFT bins, shared across the two channels
    rng = np.random.default_rng(index)
    t = np.arange(32)
    labels = np.repeat(np.arange(3), trials_per_class)
    data = np.empty((len(labels), 2, 32))
    for i, k in enumerate(labels):
        wave = np.sin(2 * np.pi * (3 + 3 * k) * t / 32 + rng.uniform(-0.3, 0.3))
        data[i] = np.outer([1.0, 0.7], wave) + noise * rng.normal(size=(2, 32))
    return EpochSet(data.astype(np.float32), labels, 32.0, subject_id=f"T{index}",
                    channel_names=("a", "b"), n_classes=3)


def quick_config(**kw):
    base = dict(max_epochs=6, batch_size=16, patience=50, lr=3e-3, window_s=1.0, onset_s=0.0)
    base.update(kw)
    return TrainConfig(**base)


# --- splits ----------------------------------------------------------------

def test_loso_partition():
    ids = [f"S{i:02d}" for i in range(1, 36)]
    splits = loso_splits(ids)
    assert len(splits) == 35
    assert all(len(s.train_subjects) == 34 for s in splits)
    assert sorted(s.test_subject for s in splits) == ids
    for s in splits:
        assert s.test_subject not in s.train_subjects
        assert set(s.train_subjects) | {s.test_subject} == set(ids)
    assert len(loso_splits(["a", "b"])) == 2
    with pytest.raises(ParameterError):
        loso_splits(["a"])


def test_loso_from_manifest(tmp_path):
    manifest = generate_dataset(SynthSpec(subjects=3, trials_per_class=1, trial_s=0.5), tmp_path)
    splits = loso_splits(read_manifest(tmp_path / "manifest.json"))
    assert [s.test_subject for s in splits] == manifest.subject_ids


def test_stratified_holdout_per_class():
    labels = np.repeat(np.arange(4), 30)
    tr, va = stratified_holdout(labels, 0.1, np.random.default_rng(0))
    np.testing.assert_array_equal(np.bincount(labels[va]), [3, 3, 3, 3])
    assert np.intersect1d(tr, va).size == 0 and tr.size + va.size == 120


def test_config_errors():
    for bad in (dict(lr=0.0), dict(batch_size=0), dict(patience=0), dict(val_fraction=1.0)):
        with pytest.raises(ParameterError):
            TrainConfig(**bad)


# --- fit -------------------------------------------------------------------

def test_toy_problem_is_learned():
    sets = [toy_subject(0), toy_subject(1)]
    cfg = TrainConfig(max_epochs=50, batch_size=16, patience=50, lr=3e-3, onset_s=0.0,
                      window_s=1.0, val_fraction=0.1)
    result = fit(sets, ModelConfig(**TOY_MODEL), cfg)
    x = np.concatenate([s.data for s in sets])[result.train_ids]
    y = np.concatenate([s.labels for s in sets])[result.train_ids]
    assert len(result.log) <= 50
    assert (predict(x, result.params) == y).mean() >= 0.99


def test_validation_never_reaches_training_batches():
    result = fit([toy_subject(0), toy_subject(1)], ModelConfig(**TOY_MODEL), quick_config())
    assert result.seen_ids.isdisjoint(set(result.val_ids.tolist()))
    assert result.seen_ids == set(result.train_ids.tolist())
    assert len(result.val_ids) == 12  # 4 of the 40 pooled trials per class


def test_same_seed_identical_logs_and_checkpoint(tmp_path):
    sets = [toy_subject(0), toy_subject(1)]
    a = fit(sets, ModelConfig(**TOY_MODEL), quick_config(seed=3))
    b = fit(sets, ModelConfig(**TOY_MODEL), quick_config(seed=3))
    assert a.log_lines() == b.log_lines()
    save_checkpoint(a.params, tmp_path / "a.ssvd")
    save_checkpoint(b.params, tmp_path / "b.ssvd")
    assert (tmp_path / "a.ssvd").read_bytes() == (tmp_path / "b.ssvd").read_bytes()
    c = fit(sets, ModelConfig(**TOY_MODEL), quick_config(seed=4))
    assert c.log_lines() != a.log_lines()


def test_augment_flag_controls_remix_calls():
    sets = [toy_subject(0), toy_subject(1)]
    off = fit(sets, ModelConfig(**TOY_MODEL), quick_config(max_epochs=2, use_augment=False))
    assert off.remix_calls == 0
    on = fit(sets, ModelConfig(**TOY_MODEL), quick_config(max_epochs=2, use_augment=True))
    assert on.remix_calls > 0


def test_asdm_flag_only_removes_asdm():
    sets = [toy_subject(0), toy_subject(1)]
    off = fit(sets, ModelConfig(**TOY_MODEL), quick_config(max_epochs=1, use_asdm=False))
    on = fit(sets, ModelConfig(**TOY_MODEL), quick_config(max_epochs=1))
    assert off.params.asdm is None and on.params.asdm is not None
    extra = set(on.params.named_tensors()) - set(off.params.named_tensors())
    assert extra and all(name.startswith("asdm.") for name in extra)
    assert off.log[0].theta is None and on.log[0].theta is not None


def test_early_stopping_restores_best_epoch():
    sets = [toy_subject(0, noise=2.0), toy_subject(1, noise=2.0)]
    cfg = quick_config(max_epochs=60, patience=3, lr=1e-2)
    result = fit(sets, ModelConfig(**TOY_MODEL), cfg)
    losses = [e.val_loss for e in result.log]
    assert result.best_epoch == int(np.argmin(losses)) + 1
    assert len(result.log) < 60  # stopped early
    assert len(result.log) - result.best_epoch == cfg.patience
    x = np.concatenate([s.data for s in sets])[result.val_ids]
    y = np.concatenate([s.labels for s in sets])[result.val_ids]
    report = metrics_report(y, predict_proba(x, result.params), 3)
    assert report.accuracy == pytest.approx(result.log[result.best_epoch - 1].val_acc)


def test_log_lines_are_json_records():
    result = fit([toy_subject(0), toy_subject(1)], ModelConfig(**TOY_MODEL), quick_config(max_epochs=2))
    records = [json.loads(line) for line in result.log_lines().splitlines()]
    assert [r["epoch"] for r in records] == [1, 2]
    assert set(records[0]) == {"epoch", "train_loss", "val_loss", "val_acc", "theta"}


def test_divergence_is_reported(monkeypatch):
    import ssvepnet.train as train

    def nan_loss(params, x, y):
        loss, probs = real(params, x, y)
        return loss * np.float32(np.nan), probs

    real = train._batch_loss
    monkeypatch.setattr(train, "_batch_loss", nan_loss)
    with pytest.raises(NumericContractError, match="epoch 1"):
        fit([toy_subject(0), toy_subject(1)], ModelConfig(**TOY_MODEL), quick_config(max_epochs=1))


# --- evaluate --------------------------------------------------------------

def test_perfect_and_constant_predictors():
    labels = np.repeat(np.arange(4), 5)
    perfect = metrics_report(labels, np.eye(4)[labels], 4)
    assert perfect.accuracy == 1.0
    np.testing.assert_array_equal(perfect.confusion, np.diag([5] * 4))
    constant = metrics_report(labels, np.tile([0.7, 0.1, 0.1, 0.1], (20, 1)), 4)
    assert constant.accuracy == 0.25


def test_evaluate_accuracy_is_mean_indicator():
    params = NetworkParams.init(ModelConfig(**TOY_MODEL), seed=0)
    es = toy_subject(2)
    report = evaluate(params, es)
    assert report.accuracy == pytest.approx((predict(es.data, params) == es.labels).mean())
    assert report.accuracy == pytest.approx(np.trace(report.confusion) / report.confusion.sum())
    with pytest.raises(ParameterError):
        evaluate(params, es.subset(np.zeros(0, dtype=int)))


def test_run_loso_sequential_equals_parallel():
    sets = [toy_subject(i, trials_per_class=8) for i in range(3)]
    cfg = quick_config(max_epochs=2)
    seq = summarize(run_loso(sets, ModelConfig(**TOY_MODEL), cfg))
    par = summarize(run_loso(sets, ModelConfig(**TOY_MODEL), cfg, jobs=2))
    assert seq == par
    assert seq["subjects"] == ["T0", "T1", "T2"]
