"""Epoch containers, the EEGT binary format, and dataset manifests.

EEGT layout (little-endian)::

    offset  type          field
    0       4 bytes       magic b"EEGT"
    4       u32           version (= 1)
    8       u32           n_trials
    12      u32           n_channels
    16      u32           n_samples
    20      f64           sample_rate_hz
    28      u16[n_trials] labels
    ...     f32[...]      payload, [trial][channel][sample] order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, ParameterError

MAGIC = b"EEGT"
VERSION = 1
_HEADER = struct.Struct("<4sIIIId")


@dataclass
class EpochSet:
    data: np.ndarray  # (trials, channels, samples), float32 microvolts
    labels: np.ndarray  # (trials,) class indices
    sample_rate: float
    subject_id: str = ""
    channel_names: tuple = ()
    n_classes: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 3:
            raise ParameterError(f"epoch data must be 3-D, got shape {self.data.shape}")
        if self.labels.shape != (self.data.shape[0],):
            raise ParameterError("one label per trial required")
        self.channel_names = tuple(self.channel_names)
        if self.channel_names and len(self.channel_names) != self.data.shape[1]:
            raise ParameterError("channel_names length does not match channel axis")
        if not np.all(np.isfinite(self.data)):
            raise ParameterError("epoch data contains NaN or Inf")
        if self.labels.size and self.labels.min() < 0:
            raise ParameterError("labels must be non-negative")
        if self.n_classes is not None and self.labels.size and self.labels.max() >= self.n_classes:
            raise ParameterError(f"label {self.labels.max()} >= number of classes {self.n_classes}")

    @property
    def n_trials(self):
        return self.data.shape[0]

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def n_samples(self):
        return self.data.shape[2]

    def replace(self, **changes):
        fields = dict(data=self.data, labels=self.labels, sample_rate=self.sample_rate,
                      subject_id=self.subject_id, channel_names=self.channel_names,
                      n_classes=self.n_classes)
        fields.update(changes)
        return EpochSet(**fields)

    def subset(self, index):
        return self.replace(data=self.data[index], labels=self.labels[index])

    def __eq__(self, other):
        if not isinstance(other, EpochSet):
            return NotImplemented
        return (self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes()
                and np.array_equal(self.labels, other.labels)
                and self.sample_rate == other.sample_rate
                and self.subject_id == other.subject_id
                and self.channel_names == other.channel_names)


def write_epoch_file(epochs, path):
    labels = epochs.labels
    if labels.size and labels.max() > 0xFFFF:
        raise ParameterError("labels do not fit in u16")
    header = _HEADER.pack(MAGIC, VERSION, epochs.n_trials, epochs.n_channels,
                          epochs.n_samples, float(epochs.sample_rate))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(labels.astype("<u2").tobytes())
        fh.write(np.ascontiguousarray(epochs.data, dtype="<f4").tobytes())


def read_epoch_file(path, subject_id="", channel_names=(), n_classes=None):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than the EEGT header", offset=len(raw))
    magic, version, n_trials, n_channels, n_samples, fs = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if not (fs > 0 and np.isfinite(fs)):
        raise FormatError(f"invalid sample rate {fs}", offset=20)
    pos = _HEADER.size
    label_bytes = 2 * n_trials
    payload_bytes = 4 * n_trials * n_channels * n_samples
    expected = pos + label_bytes + payload_bytes
    if len(raw) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, found {len(raw)}",
                          offset=len(raw))
    if len(raw) > expected:
        raise FormatError(f"{len(raw) - expected} trailing bytes after payload", offset=expected)
    labels = np.frombuffer(raw, dtype="<u2", count=n_trials, offset=pos).astype(np.int64)
    if n_classes is not None:
        bad = np.flatnonzero(labels >= n_classes)
        if bad.size:
            raise FormatError(f"label {labels[bad[0]]} >= number of classes {n_classes}",
                              offset=pos + 2 * int(bad[0]))
    data = np.frombuffer(raw, dtype="<f4", offset=pos + label_bytes,
                         count=n_trials * n_channels * n_samples)
    data = data.astype(np.float32).reshape(n_trials, n_channels, n_samples)
    if not np.all(np.isfinite(data)):
        first = int(np.flatnonzero(~np.isfinite(data.reshape(-1)))[0])
        raise FormatError("payload contains NaN or Inf", offset=pos + label_bytes + 4 * first)
    if channel_names and len(channel_names) != n_channels:
        raise FormatError(f"header has {n_channels} channels, expected {len(channel_names)}",
                          offset=12)
    return EpochSet(data, labels, fs, subject_id=subject_id, channel_names=channel_names,
                    n_classes=n_classes)


# --- manifests ---------------------------------------------------------------

@dataclass
class DatasetManifest:
    """Dataset description stored as JSON.

    Keys: ``dataset_name``, ``stimulus_frequencies`` (Hz), ``stimulus_phases``
    (radians, may be empty), ``sample_rate`` (Hz), ``channel_names``, and
    ``subjects``: a list of ``{"id": ..., "path": ...}`` with paths relative to
    the manifest file.
    """

    dataset_name: str
    stimulus_frequencies: list
    sample_rate: float
    channel_names: list
    subject_files: list = field(default_factory=list)  # (subject_id, path)
    stimulus_phases: list = field(default_factory=list)
    root: Path = Path(".")

    def __post_init__(self):
        freqs = np.asarray(self.stimulus_frequencies, dtype=float)
        if freqs.size == 0 or np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ParameterError("stimulus frequencies must be positive and strictly increasing")
        if self.stimulus_phases and len(self.stimulus_phases) != freqs.size:
            raise ParameterError("stimulus_phases must be empty or match the frequencies")
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")
        ids = [sid for sid, _ in self.subject_files]
        if len(set(ids)) != len(ids):
            raise ParameterError("duplicate subject ids in manifest")

    @property
    def n_classes(self):
        return len(self.stimulus_frequencies)

    @property
    def subject_ids(self):
        return [sid for sid, _ in self.subject_files]

    def subject_path(self, subject_id):
        for sid, path in self.subject_files:
            if sid == subject_id:
                path = Path(path)
                return path if path.is_absolute() else self.root / path
        raise KeyError(subject_id)

    def load_subject(self, subject_id):
        return read_epoch_file(self.subject_path(subject_id), subject_id=subject_id,
                               channel_names=tuple(self.channel_names), n_classes=self.n_classes)

    def validate_files(self):
        for sid in self.subject_ids:
            raw = self.subject_path(sid).read_bytes()[: _HEADER.size]
            if len(raw) < _HEADER.size:
                raise FormatError(f"subject {sid}: file shorter than header", offset=len(raw))
            _, _, _, n_channels, _, fs = _HEADER.unpack(raw)
            if n_channels != len(self.channel_names):
                raise FormatError(f"subject {sid}: {n_channels} channels in header, "
                                  f"manifest lists {len(self.channel_names)}", offset=12)
            if fs != self.sample_rate:
                raise FormatError(f"subject {sid}: sample rate {fs} != manifest {self.sample_rate}",
                                  offset=20)

    def to_dict(self):
        return {
            "dataset_name": self.dataset_name,
            "stimulus_frequencies": [float(f) for f in self.stimulus_frequencies],
            "stimulus_phases": [float(p) for p in self.stimulus_phases],
            "sample_rate": float(self.sample_rate),
            "channel_names": list(self.channel_names),
            "subjects": [{"id": sid, "path": str(path)} for sid, path in self.subject_files],
        }


_MANIFEST_KEYS = {"dataset_name", "stimulus_frequencies", "stimulus_phases", "sample_rate",
                  "channel_names", "subjects"}


def write_manifest(manifest, path):
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")


def read_manifest(path, check_files=True):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise FormatError(f"unknown manifest keys: {sorted(unknown)}")
    missing = _MANIFEST_KEYS - {"stimulus_phases"} - set(doc)
    if missing:
        raise FormatError(f"missing manifest keys: {sorted(missing)}")
    manifest = DatasetManifest(
        dataset_name=doc["dataset_name"],
        stimulus_frequencies=list(doc["stimulus_frequencies"]),
        stimulus_phases=list(doc.get("stimulus_phases", [])),
        sample_rate=float(doc["sample_rate"]),
        channel_names=list(doc["channel_names"]),
        subject_files=[(str(s["id"]), s["path"]) for s in doc["subjects"]],
        root=path.parent,
    )
    if check_files:
        manifest.validate_files()
    return manifest


# --- cropping and channel selection ---------------------------------------

def extract_window(epochs, onset_s, length_s):
    """Crop every trial to ``[round(onset*fs), round(onset*fs) + round(length*fs))``."""
    fs = epochs.sample_rate
    start = int(round(onset_s * fs))
    n = int(round(length_s * fs))
    if onset_s < 0 or n <= 0 or start + n > epochs.n_samples:
        raise ParameterError(
            f"window [{start}, {start + n}) samples exceeds trial of {epochs.n_samples} samples")
    return epochs.replace(data=epochs.data[:, :, start:start + n])


def select_channels(epochs, names):
    available = list(epochs.channel_names)
    try:
        index = [available.index(name) for name in names]
    except ValueError as exc:
        raise LookupError(f"unknown channel: {exc}") from None
    return epochs.replace(data=epochs.data[:, index, :], channel_names=tuple(names))


def concat_epochs(sets):
    sets = list(sets)
    if not sets:
        raise ParameterError("nothing to concatenate")
    first = sets[0]
    return first.replace(data=np.concatenate([s.data for s in sets]),
                         labels=np.concatenate([s.labels for s in sets]),
                         subject_id="+".join(s.subject_id for s in sets))
