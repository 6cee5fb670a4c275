"""Converters from the public SSVEP dataset containers to EEGT files + manifest.

Needs ``scipy`` (``pip install ssvepnet[convert]``) for ``loadmat`` and the
polyphase resampler. Every converter keeps the eight occipital electrodes,
crops each trial to start at stimulus onset, resamples to 250 Hz and relabels
the targets in increasing frequency order.

Expected inputs (one directory per dataset, files as distributed):

``benchmark``  ``S1.mat`` .. ``S35.mat`` with ``data`` (64, 1500, 40, 6) at
               250 Hz, 0.5 s pre-stimulus; optional ``Freq_Phase.mat``.
``beta``       ``S1.mat`` .. ``S70.mat`` with struct ``data.EEG``
               (64, T, 4, 40), 0.5 s pre-stimulus, and ``data.suppl_info.freqs``.
``nakanishi``  ``s1.mat`` .. ``s10.mat`` with ``eeg`` (12, 8, 1114, 15) at 256 Hz.
"""

import re
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .signal_io import DatasetManifest, EpochSet, write_epoch_file, write_manifest
from .synth import NAKANISHI_FREQS, OCCIPITAL_8

TARGET_RATE = 250.0
# 0-based rows of PO5, PO3, POz, PO4, PO6, O1, Oz, O2 in the 64-channel cap layout
OCCIPITAL_ROWS_64 = (53, 54, 55, 56, 57, 60, 61, 62)
# file order of the 12 targets in the Nakanishi recordings
NAKANISHI_FILE_ORDER = (9.25, 11.25, 13.25, 9.75, 11.75, 13.75, 10.25, 12.25, 14.25, 10.75,
                        12.75, 14.75)


def _loadmat(path, **kw):
    try:
        from scipy.io import loadmat
    except ImportError as exc:  # pragma: no cover
        raise ImportError("dataset conversion needs scipy: pip install ssvepnet[convert]") from exc
    return loadmat(path, **kw)


def _resample(x, src_rate):
    if src_rate == TARGET_RATE:
        return x
    from fractions import Fraction

    from scipy.signal import resample_poly

    ratio = Fraction(TARGET_RATE / src_rate).limit_denominator(1000)
    return resample_poly(x, ratio.numerator, ratio.denominator, axis=-1)


def _subject_files(src, prefix):
    pattern = re.compile(rf"^{prefix}(\d+)\.mat$")
    found = []
    for p in Path(src).iterdir():
        m = pattern.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    if not found:
        raise FormatError(f"no {prefix}<n>.mat files in {src}")
    return sorted(found)


def benchmark_frequencies(src=None):
    """Target frequencies in file order."""
    if src is not None and (Path(src) / "Freq_Phase.mat").exists():
        return np.ravel(_loadmat(Path(src) / "Freq_Phase.mat")["freqs"]).astype(float)
    k = np.arange(40)
    return 8.0 + (k % 8) + 0.2 * (k // 8)


def trials_from_array(data, freqs_in_file_order, src_rate, pre_s, rows=None):
    """(targets, blocks, channels, samples) -> (trials, labels, sorted frequencies)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 4:
        raise FormatError(f"expected a 4-D recording array, got {data.ndim}-D")
    n_targets, n_blocks = data.shape[:2]
    if rows is not None:
        data = data[:, :, list(rows)]
    start = int(round(pre_s * src_rate))
    data = _resample(data[..., start:], src_rate)
    freqs = np.asarray(freqs_in_file_order, dtype=float)
    if freqs.size != n_targets:
        raise FormatError(f"{freqs.size} frequencies for {n_targets} targets")
    order = np.argsort(freqs, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    trials = data.reshape(n_targets * n_blocks, *data.shape[2:])
    return trials.astype(np.float32), np.repeat(rank, n_blocks), freqs[order]


def load_benchmark_subject(path, freqs):
    data = _loadmat(path)["data"]  # channels, samples, targets, blocks
    return trials_from_array(data.transpose(2, 3, 0, 1), freqs, 250.0, 0.5, OCCIPITAL_ROWS_64)


def load_beta_subject(path):
    mat = _loadmat(path, squeeze_me=True, struct_as_record=False)["data"]
    eeg = np.asarray(mat.EEG)  # channels, samples, blocks, targets
    freqs = np.ravel(mat.suppl_info.freqs).astype(float)
    return trials_from_array(eeg.transpose(3, 2, 0, 1), freqs, 250.0, 0.5, OCCIPITAL_ROWS_64)


def load_nakanishi_subject(path):
    eeg = _loadmat(path)["eeg"]  # targets, channels, samples, blocks
    return trials_from_array(eeg.transpose(0, 3, 1, 2), NAKANISHI_FILE_ORDER, 256.0, 0.0)


def convert_dataset(kind, src, out_dir, limit=None):
    """Convert a downloaded dataset directory; returns the written manifest."""
    src, out_dir = Path(src), Path(out_dir)
    if kind == "benchmark":
        freqs_file = benchmark_frequencies(src)
        files = _subject_files(src, "S")
        load = lambda p: load_benchmark_subject(p, freqs_file)  # noqa: E731
    elif kind == "beta":
        files = _subject_files(src, "S")
        load = load_beta_subject
    elif kind == "nakanishi":
        files = _subject_files(src, "s")
        load = load_nakanishi_subject
    else:
        raise ParameterError(f"unknown dataset kind {kind!r}")
    if limit is not None:
        files = files[:limit]
    out_dir.mkdir(parents=True, exist_ok=True)
    entries, freqs = [], None
    for number, path in files:
        trials, labels, sorted_freqs = load(path)
        if freqs is None:
            freqs = sorted_freqs
        elif not np.allclose(freqs, sorted_freqs):
            raise FormatError(f"{path.name}: stimulus frequencies differ from the first subject")
        sid = f"S{number:02d}"
        epochs = EpochSet(trials, labels, TARGET_RATE, subject_id=sid, channel_names=OCCIPITAL_8,
                          n_classes=len(freqs))
        write_epoch_file(epochs, out_dir / f"{sid}.eegt")
        entries.append((sid, f"{sid}.eegt"))
    manifest = DatasetManifest(kind, [float(f) for f in freqs], TARGET_RATE, list(OCCIPITAL_8),
                               entries, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


__all__ = ["convert_dataset", "trials_from_array", "benchmark_frequencies", "NAKANISHI_FREQS"]
