"""Desk-scale experiments on synthetic corpora, shared by the scripts and the acceptance tests."""

import time
from dataclasses import dataclass, field

import numpy as np

from .asdm import bin_kept, fit_threshold, retained_fraction, tone_noise_trials
from .baselines import classify_trials
from .model import ModelConfig
from .signal_io import FilterSpec, butter_design, extract_window
from .synth import SynthSpec, generate_subject
from .train import TrainConfig, loso_splits, prepare_subject, run_loso, summarize

BAND = (6.0, 90.0, 4)  # band-pass low, high (Hz) and order used before training


def band_sos(sample_rate):
    low, high, order = BAND
    return butter_design(FilterSpec(low, min(high, 0.45 * sample_rate), sample_rate, order))


def baseline_accuracy(spec, window_s=1.0, onset_s=0.14, methods=("cca", "fbcca")):
    """Pooled accuracy of the training-free recognizers over every subject of ``spec``."""
    correct = dict.fromkeys(methods, 0)
    total = 0
    for s in range(spec.subjects):
        es = extract_window(generate_subject(spec, s), onset_s, window_s)
        for m in methods:
            pred, _ = classify_trials(es.data, spec.frequencies, spec.sample_rate, m)
            correct[m] += int((pred == es.labels).sum())
        total += es.n_trials
    return {m: c / total for m, c in correct.items()}, total


@dataclass
class LosoOutcome:
    window_s: float
    accuracies: list
    mean: float
    seconds: float
    thetas: list = field(default_factory=list)
    epochs: list = field(default_factory=list)


def synthetic_loso(snr_db=0.0, window_s=1.0, use_asdm=True, use_augment=True, seed=0,
                   subjects=6, progress=None, **train_overrides):
    """Leave-one-subject-out accuracy on a fresh synthetic corpus with default training."""
    start = time.perf_counter()
    spec = SynthSpec(snr_db=snr_db, subjects=subjects, seed=seed)
    cfg = TrainConfig(window_s=window_s, use_asdm=use_asdm, use_augment=use_augment, seed=seed,
                      **train_overrides)
    sos = band_sos(spec.sample_rate)
    sets = [prepare_subject(generate_subject(spec, s), cfg, sos) for s in range(subjects)]
    mc = ModelConfig(n_samples=sets[0].n_samples, n_classes=len(spec.frequencies),
                     channels=spec.channels)
    results = []
    for split in loso_splits([s.subject_id for s in sets], cfg.val_fraction):
        results.extend(run_loso(sets, mc, cfg, splits=[split]))
        if progress is not None:
            _, res, rep = results[-1]
            progress(f"{split.test_subject}: {rep.accuracy:.3f} "
                     f"(best epoch {res.best_epoch}/{len(res.log)})")
    summary = summarize(results)
    return LosoOutcome(window_s, summary["accuracy"], summary["mean"],
                       time.perf_counter() - start,
                       thetas=[r.params.theta for _, r, _ in results],
                       epochs=[len(r.log) for _, r, _ in results])


@dataclass
class ThresholdOutcome:
    trace: list
    final_theta: float
    last_step: float
    noise_removed: float
    fundamental_kept: float


def threshold_experiment(n_trials=512, n_samples=128, epochs=150, lr=0.05, seed=0):
    """Learn the spectral threshold alone on tone-plus-noise, then score the hard mask."""
    rng = np.random.default_rng(seed)
    noisy, clean, _ = tone_noise_trials(n_trials, n_samples, rng)
    trace = fit_threshold(noisy, clean, epochs=epochs, lr=lr, seed=seed)
    theta = trace[-1]
    test_rng = np.random.default_rng(seed + 1)
    noise = test_rng.normal(size=(1000, n_samples))
    removed = 1.0 - float(retained_fraction(noise, theta).mean())
    held_noisy, _, bins = tone_noise_trials(1000, n_samples, test_rng)
    kept = float(bin_kept(held_noisy, theta, bins).mean())
    return ThresholdOutcome(trace, theta, abs(trace[-1] - trace[-2]), removed, kept)
