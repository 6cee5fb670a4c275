"""Synthetic SSVEP corpora shaped like the public benchmark datasets.

Each trial is ``pattern (C,) x sum_h a_h sin(2 pi h f t + phi_h)`` plus
spatially mixed background noise (half white, half 1/f power), scaled per
trial so that signal power / noise power hits the target SNR exactly.
A corpus-wide draw fixes a positive scalp pattern and the harmonic phases;
each subject perturbs them (pattern gains, a near-identity mixing matrix,
phase jitter of at most ``phase_spread`` radians, harmonic amplitudes), so
responses are similar but not identical across subjects.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffcore.fft import dft, idft
from .errors import ParameterError
from .signal_io import DatasetManifest, EpochSet, write_epoch_file, write_manifest

NAKANISHI_FREQS = tuple(9.25 + 0.5 * i for i in range(12))
OCCIPITAL_8 = ("PO5", "PO3", "POz", "PO4", "PO6", "O1", "Oz", "O2")


@dataclass
class SynthSpec:
    frequencies: tuple = NAKANISHI_FREQS
    channels: int = 8
    sample_rate: float = 250.0
    trial_s: float = 1.5
    trials_per_class: int = 10
    subjects: int = 6
    harmonics: int = 3
    snr_db: float = 0.0  # -inf gives pure noise
    white_fraction: float = 0.5
    amplitude_uv: float = 1.0
    phase_spread: float = np.pi / 4  # subject jitter around the shared harmonic phases
    mixing_spread: float = 0.3  # size of the per-subject deviation from identity mixing
    seed: int = 0
    channel_names: tuple = field(default=OCCIPITAL_8)

    def __post_init__(self):
        self.frequencies = tuple(float(f) for f in self.frequencies)
        nyquist = self.sample_rate / 2.0
        if max(self.frequencies) * self.harmonics >= nyquist:
            raise ParameterError("highest harmonic must stay below Nyquist")
        if np.isnan(self.snr_db) or self.snr_db == np.inf:
            raise ParameterError("SNR must be finite or -inf")
        if len(self.channel_names) != self.channels:
            self.channel_names = tuple(f"Ch{i + 1}" for i in range(self.channels))
        if self.trials_per_class < 1 or self.subjects < 1:
            raise ParameterError("need at least one subject and one trial per class")

    @property
    def n_samples(self):
        return int(round(self.trial_s * self.sample_rate))


def mixing_matrix(rng, channels, spread=0.3, max_condition=10.0):
    """Per-subject channel mixing ``I + spread * G / sqrt(C)``, redrawn until well-conditioned."""
    while True:
        m = np.eye(channels) + spread * rng.normal(size=(channels, channels)) / np.sqrt(channels)
        if np.linalg.cond(m) < max_condition:
            return m


def pink_noise(rng, shape, sample_rate):
    """Unit-variance noise with 1/f power along the last axis."""
    n = shape[-1]
    white = rng.normal(size=shape)
    spec = dft(white)
    freqs = np.minimum(np.arange(n), n - np.arange(n)) * sample_rate / n
    gain = np.zeros(n)
    gain[1:] = 1.0 / np.sqrt(np.maximum(freqs[1:], sample_rate / n))
    out = idft(spec * gain).real
    out -= out.mean(axis=-1, keepdims=True)
    return out / out.std(axis=-1, keepdims=True)


def background_noise(rng, shape, sample_rate, white_fraction):
    white = rng.normal(size=shape)
    white /= white.std(axis=-1, keepdims=True)
    pink = pink_noise(rng, shape, sample_rate)
    return np.sqrt(white_fraction) * white + np.sqrt(1.0 - white_fraction) * pink


@dataclass
class SubjectProfile:
    mixing: np.ndarray
    pattern: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray


def subject_profile(spec, subject_index):
    rng = np.random.default_rng([spec.seed, subject_index, 1])
    C, H = spec.channels, spec.harmonics
    mixing = mixing_matrix(rng, C, spec.mixing_spread)
    corpus = np.random.default_rng([spec.seed, 0, 0])
    base = corpus.uniform(0.5, 1.5, size=C)
    shared = corpus.uniform(-np.pi, np.pi, size=H)
    pattern = mixing @ (base * rng.uniform(0.8, 1.2, size=C))
    pattern /= np.sqrt(np.mean(pattern ** 2))
    amplitudes = rng.uniform(0.7, 1.3, size=H) / np.arange(1, H + 1)
    phases = shared + rng.uniform(-spec.phase_spread, spec.phase_spread, size=H)
    return SubjectProfile(mixing, pattern, amplitudes, phases)


def ssvep_waveform(freq, t, amplitudes, phases, class_phase=0.0):
    out = np.zeros_like(t)
    for h, (a, phi) in enumerate(zip(amplitudes, phases), start=1):
        out += a * np.sin(2 * np.pi * h * freq * t + phi + h * class_phase)
    return out


def generate_subject(spec, subject_index, class_phases=None, return_parts=False):
    """EpochSet for one subject: ``trials_per_class`` trials of every class, class-major order."""
    profile = subject_profile(spec, subject_index)
    rng = np.random.default_rng([spec.seed, subject_index, 2])
    R, C, T = len(spec.frequencies), spec.channels, spec.n_samples
    t = np.arange(T) / spec.sample_rate
    labels = np.repeat(np.arange(R), spec.trials_per_class)
    n = len(labels)
    signal = np.zeros((n, C, T))
    for i, k in enumerate(labels):
        phase = 0.0 if class_phases is None else class_phases[k]
        wave = ssvep_waveform(spec.frequencies[k], t, profile.amplitudes, profile.phases, phase)
        signal[i] = np.outer(profile.pattern, wave)
    noise = background_noise(rng, (n, C, T), spec.sample_rate, spec.white_fraction)
    noise = np.einsum("ij,njt->nit", profile.mixing, noise)
    if spec.snr_db == -np.inf:
        signal[:] = 0.0
        noise /= np.sqrt(np.mean(noise ** 2, axis=(1, 2), keepdims=True))
    else:
        target = 10.0 ** (spec.snr_db / 10.0)
        ps = np.mean(signal ** 2, axis=(1, 2), keepdims=True)
        pn = np.mean(noise ** 2, axis=(1, 2), keepdims=True)
        noise *= np.sqrt(ps / (pn * target))
    data = spec.amplitude_uv * (signal + noise)
    epochs = EpochSet(data.astype(np.float32), labels, spec.sample_rate,
                      subject_id=f"S{subject_index + 1:02d}", channel_names=spec.channel_names,
                      n_classes=R)
    if return_parts:
        return epochs, spec.amplitude_uv * signal, spec.amplitude_uv * noise
    return epochs


def generate_dataset(spec, out_dir, name="synthetic"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for s in range(spec.subjects):
        epochs = generate_subject(spec, s)
        fname = f"{epochs.subject_id}.eegt"
        write_epoch_file(epochs, out_dir / fname)
        files.append((epochs.subject_id, fname))
    manifest = DatasetManifest(
        dataset_name=name,
        stimulus_frequencies=list(spec.frequencies),
        sample_rate=spec.sample_rate,
        channel_names=list(spec.channel_names),
        subject_files=files,
        root=out_dir,
    )
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


def realized_snr_db(signal, noise):
    return 10.0 * np.log10(np.mean(signal ** 2) / np.mean(noise ** 2))
