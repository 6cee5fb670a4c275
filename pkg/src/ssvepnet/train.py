"""Leave-one-subject-out training with Adam, early stopping and remix augmentation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import diffcore as dc
from .augment import AugmentPolicy, RemixCounter, augment_batch
from .errors import NumericContractError, ParameterError
from .evaluation import MetricsReport, metrics_report
from .model import ModelConfig, NetworkParams, forward, predict_proba
from .signal_io import concat_epochs, extract_window


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 15
    seed: int = 0
    p_remix: float = 0.5
    window_s: float = 1.0
    onset_s: float = 0.14
    use_asdm: bool = True
    use_augment: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ParameterError("lr > 0, batch_size >= 1, patience >= 1, max_epochs >= 1 required")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ParameterError("val_fraction must lie in [0, 1)")


@dataclass
class LosoSplit:
    test_subject: str
    train_subjects: list
    val_fraction: float = 0.1


def loso_splits(subject_ids, val_fraction=0.1):
    """One split per subject, training on all the others."""
    if hasattr(subject_ids, "subject_ids"):
        subject_ids = subject_ids.subject_ids
    subject_ids = list(subject_ids)
    if len(subject_ids) < 2:
        raise ParameterError("leave-one-subject-out needs at least two subjects")
    return [LosoSplit(s, [o for o in subject_ids if o != s], val_fraction) for s in subject_ids]


def stratified_holdout(labels, fraction, rng):
    """Indices (train, val) with ``round(fraction * n_c)`` validation trials per class."""
    labels = np.asarray(labels)
    val = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        k = int(round(fraction * len(idx)))
        if k:
            val.extend(rng.choice(idx, size=k, replace=False).tolist())
    val = np.array(sorted(val), dtype=np.int64)
    train = np.setdiff1d(np.arange(len(labels)), val)
    return train, val


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    theta: float | None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class FitResult:
    params: NetworkParams
    log: list = field(default_factory=list)
    best_epoch: int = 0
    remix_calls: int = 0
    train_ids: np.ndarray | None = None
    val_ids: np.ndarray | None = None
    seen_ids: set = field(default_factory=set)

    def log_lines(self):
        return "\n".join(entry.to_json() for entry in self.log) + "\n"


def _batch_loss(params, x, y_onehot):
    probs = forward(x, params, mode="train")
    return dc.cross_entropy(probs, y_onehot), probs


def _eval_loss(params, x, labels, n_classes):
    probs = predict_proba(x, params)
    clamped = np.maximum(probs[np.arange(len(labels)), labels], dc.ops.LOG_CLAMP)
    return float(-np.log(clamped).mean()), float((probs.argmax(axis=1) == labels).mean())


def fit(train_sets, model_config, config, progress=None):
    """Train on a list of per-subject EpochSets already windowed to the model length.

    Validation trials are held out per class from the pooled training subjects;
    the returned parameters are those of the epoch with the lowest validation loss.
    """
    rng = np.random.default_rng(config.seed)
    data = np.concatenate([s.data for s in train_sets]).astype(np.float32)
    labels = np.concatenate([s.labels for s in train_sets])
    subjects = np.concatenate([np.full(s.n_trials, i) for i, s in enumerate(train_sets)])
    R = model_config.n_classes
    if config.val_fraction > 0:
        tr, va = stratified_holdout(labels, config.val_fraction, rng)
    else:
        tr, va = np.arange(len(labels)), np.zeros(0, dtype=np.int64)
    if len(tr) == 0:
        raise ParameterError("no training trials left after the validation split")
    scale = float(data[tr].std())
    model_config = replace(model_config, input_scale=1.0 / scale if scale > 0 else 1.0,
                           use_asdm=config.use_asdm, use_augment=config.use_augment)
    params = NetworkParams.init(model_config, seed=config.seed)
    opt = dc.Adam(params.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    policy = AugmentPolicy(p_remix=config.p_remix, seed=config.seed)
    counter = RemixCounter()
    eye = np.eye(R, dtype=np.float32)

    x_tr, y_tr, s_tr = data[tr], labels[tr], subjects[tr]
    x_va, y_va = data[va], labels[va]
    result = FitResult(params=params, train_ids=tr, val_ids=va)
    best = (np.inf, None, 0)
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(tr))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            result.seen_ids.update(tr[idx].tolist())
            xb = x_tr[idx]
            if config.use_augment:
                xb = augment_batch(xb, s_tr[idx], x_tr, s_tr, policy, rng, training=True,
                                   counter=counter)
            with dc.Tape() as tape:
                loss, _ = _batch_loss(params, xb, eye[y_tr[idx]])
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericContractError(f"training diverged at epoch {epoch} (loss {value})")
            tape.backward(loss)
            opt.step()
            tape.clear()
            total += value * len(idx)
            count += len(idx)
        train_loss = total / count
        if len(va):
            val_loss, val_acc = _eval_loss(params, x_va, y_va, R)
        else:
            val_loss, val_acc = train_loss, float("nan")
        entry = EpochLog(epoch, train_loss, val_loss, val_acc, params.theta)
        result.log.append(entry)
        if progress is not None:
            progress(entry)
        if val_loss < best[0]:
            best = (val_loss, params.state_dict(), epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    params.load_state_dict(best[1])
    result.best_epoch = best[2]
    result.remix_calls = counter.calls
    return result


def prepare_subject(epochs, config, filter_sos=None):
    """Band-pass (optional, on the full trial) then crop the training window."""
    from .signal_io.filters import filtfilt

    if filter_sos is not None:
        epochs = filtfilt(epochs, filter_sos)
    return extract_window(epochs, config.onset_s, config.window_s)


def evaluate(params, test_set, frequencies=None):
    if test_set.n_trials == 0:
        raise ParameterError("empty test set")
    probs = predict_proba(test_set.data, params)
    return metrics_report(test_set.labels, probs, params.config.n_classes,
                          subject_ids=[test_set.subject_id], params=params)


def run_loso(subject_sets, model_config, config, splits=None, progress=None, jobs=1):
    """Train and evaluate every split; returns a list of (split, FitResult, MetricsReport)."""
    by_id = {s.subject_id: s for s in subject_sets}
    splits = splits if splits is not None else loso_splits(list(by_id), config.val_fraction)

    def one(split):
        result = fit([by_id[s] for s in split.train_subjects], model_config, config, progress)
        report = evaluate(result.params, by_id[split.test_subject])
        return split, result, report

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_split, by_id, split, model_config, config) for split in splits]
            return [f.result() for f in futures]
    return [one(split) for split in splits]


def _run_split(by_id, split, model_config, config):
    result = fit([by_id[s] for s in split.train_subjects], model_config, config)
    report = evaluate(result.params, by_id[split.test_subject])
    return split, result, report


def summarize(results):
    accs = np.array([report.accuracy for _, _, report in results])
    return {"subjects": [split.test_subject for split, _, _ in results],
            "accuracy": accs.tolist(),
            "mean": float(accs.mean()), "std": float(accs.std())}


__all__ = ["TrainConfig", "LosoSplit", "loso_splits", "fit", "evaluate", "run_loso",
           "prepare_subject", "summarize", "FitResult", "EpochLog", "MetricsReport",
           "ModelConfig", "concat_epochs"]
