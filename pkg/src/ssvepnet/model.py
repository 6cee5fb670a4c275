"""End-to-end network: CADA -> ASDM -> temporal conv -> spatial conv -> ELU -> pool -> 3 FC -> softmax.

Trainable scalar count, with C channels, T samples, R classes, kernel length
d, Kt temporal and Ks spatial filters, pool width w, hidden sizes h1, h2, and
P = floor((T - d + 1) / w) pooled time steps::

    CADA      2 (C^2 + C)
    ASDM      1 + (floor(T/2) + 1) + 4C + 4C^2 + 3C        (if use_asdm)
    temporal  Kt d + Kt
    spatial   Ks Kt C + Ks
    fc1       Ks P h1 + h1
    fc2       h1 h2 + h2
    fc3       h2 R + R

Checkpoint layout (little-endian)::

    b"SSVD" | u32 version=1 | u32 len | ModelConfig as UTF-8 JSON
    u32 n_tensors, then per tensor in ``NetworkParams.named_tensors`` order:
    u16 name_len | name | u32 ndim | u32[ndim] shape | f32[prod(shape)] data
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .asdm import AsdmParams, asdm_forward
from .augment import CadaParams, cada_apply
from .errors import DimensionError, FormatError, NumericContractError

CHECKPOINT_MAGIC = b"SSVD"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    n_samples: int
    n_classes: int
    channels: int = 8
    temporal_kernel: int = 25
    temporal_filters: int = 16
    spatial_filters: int = 16
    pool: int = 4
    hidden: tuple = (128, 64)
    elu_alpha: float = 1.0
    use_asdm: bool = True
    use_augment: bool = True
    tau: float = 0.05
    cada_gate_init: float = 0.95
    input_scale: float = 1.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.temporal_kernel > self.n_samples:
            raise DimensionError(
                f"temporal kernel {self.temporal_kernel} longer than window {self.n_samples}")
        if self.pool < 1:
            raise DimensionError("pool width must be >= 1")
        if len(self.hidden) != 2 or min(self.hidden) <= 0:
            raise DimensionError("need two positive hidden sizes")
        if self.pooled_time < 1:
            raise DimensionError(f"pool width {self.pool} leaves no time steps")
        if self.n_classes < 2 or self.channels < 1:
            raise DimensionError("need >= 2 classes and >= 1 channel")

    @property
    def conv_time(self):
        return self.n_samples - self.temporal_kernel + 1

    @property
    def pooled_time(self):
        return self.conv_time // self.pool

    @property
    def flat_features(self):
        return self.spatial_filters * self.pooled_time

    def to_json(self):
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def param_count(config):
    """(trainable scalars, bytes at 32-bit) from the closed-form formula."""
    C, T, R = config.channels, config.n_samples, config.n_classes
    d, kt, ks = config.temporal_kernel, config.temporal_filters, config.spatial_filters
    h1, h2 = config.hidden
    n = 2 * (C * C + C)
    if config.use_asdm:
        n += 1 + (T // 2 + 1) + 4 * C + 4 * C * C + 3 * C
    n += kt * d + kt
    n += ks * kt * C + ks
    n += config.flat_features * h1 + h1
    n += h1 * h2 + h2
    n += h2 * R + R
    return n, 4 * n


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class NetworkParams:
    config: ModelConfig
    cada: CadaParams
    asdm: AsdmParams | None
    temporal_w: dc.Tensor
    temporal_b: dc.Tensor
    spatial_w: dc.Tensor
    spatial_b: dc.Tensor
    fc: list = field(default_factory=list)  # [(w, b)] * 3, w is (in, out)

    @classmethod
    def init(cls, config, seed=0, dtype=None):
        rng = np.random.default_rng(seed)
        C, d = config.channels, config.temporal_kernel
        kt, ks = config.temporal_filters, config.spatial_filters

        def t(v):
            return dc.tensor(v, requires_grad=True, dtype=dtype)

        cada = CadaParams.identity(C, gate=config.cada_gate_init, dtype=dtype)
        asdm = AsdmParams.init(C, config.n_samples, rng, dtype=dtype, tau=config.tau) \
            if config.use_asdm else None
        temporal_w = t(_uniform(rng, (kt, 1, 1, d), d))
        temporal_b = t(_uniform(rng, (kt,), d))
        spatial_w = t(_uniform(rng, (ks, kt, C, 1), kt * C))
        spatial_b = t(_uniform(rng, (ks,), kt * C))
        sizes = [config.flat_features, *config.hidden, config.n_classes]
        fc = [(t(_uniform(rng, (a, b), a)), t(_uniform(rng, (b,), a)))
              for a, b in zip(sizes[:-1], sizes[1:])]
        return cls(config, cada, asdm, temporal_w, temporal_b, spatial_w, spatial_b, fc)

    def named_tensors(self):
        out = {f"cada.{k}": v for k, v in self.cada.tensors().items()}
        if self.asdm is not None:
            out.update({f"asdm.{k}": v for k, v in self.asdm.tensors().items()})
        out["temporal.w"] = self.temporal_w
        out["temporal.b"] = self.temporal_b
        out["spatial.w"] = self.spatial_w
        out["spatial.b"] = self.spatial_b
        for i, (w, b) in enumerate(self.fc, start=1):
            out[f"fc{i}.w"] = w
            out[f"fc{i}.b"] = b
        return out

    def parameters(self):
        return list(self.named_tensors().values())

    def n_scalars(self):
        return sum(p.size for p in self.parameters())

    @property
    def theta(self):
        return None if self.asdm is None else float(self.asdm.theta.data)

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.named_tensors().items()}

    def load_state_dict(self, state):
        tensors = self.named_tensors()
        if set(state) != set(tensors):
            raise DimensionError("state dict keys do not match the network")
        for k, t in tensors.items():
            if state[k].shape != t.shape:
                raise DimensionError(f"{k}: shape {state[k].shape} != {t.shape}")
            t.data[...] = state[k]


def features(x, params):
    """Everything up to the flattened pooled feature map (B, Ks * P)."""
    cfg = params.config
    x = dc.as_tensor(x)
    if x.ndim != 3 or x.shape[1:] != (cfg.channels, cfg.n_samples):
        raise DimensionError(f"expected input (B, {cfg.channels}, {cfg.n_samples}), got {x.shape}")
    if cfg.input_scale != 1.0:
        x = x * cfg.input_scale
    h = cada_apply(x, params.cada)
    if params.asdm is not None:
        h = asdm_forward(h, params.asdm)
    B = x.shape[0]
    h = dc.reshape(h, (B, 1, cfg.channels, cfg.n_samples))
    h = dc.conv2d_valid(h, params.temporal_w, params.temporal_b)  # B, Kt, C, T'
    h = dc.conv2d_valid(h, params.spatial_w, params.spatial_b)  # B, Ks, 1, T'
    h = dc.elu(h, cfg.elu_alpha)
    h = dc.avg_pool_time(h, cfg.pool)
    return dc.reshape(h, (B, cfg.flat_features))


def logits(x, params):
    cfg = params.config
    h = features(x, params)
    for i, (w, b) in enumerate(params.fc):
        h = dc.linear(h, w, b)
        if i < len(params.fc) - 1:
            h = dc.elu(h, cfg.elu_alpha)
    return h


def forward(x, params, mode="eval"):
    """Class probabilities (B, R). ``mode`` is accepted for symmetry; remixing happens upstream."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    probs = dc.softmax(logits(x, params))
    if not np.all(np.isfinite(probs.data)):
        raise NumericContractError("network produced non-finite probabilities")
    return probs


def argmax_lowest(probs):
    """Row-wise argmax; exact ties resolve to the lowest class index."""
    return np.argmax(np.asarray(probs), axis=-1)


def predict_proba(x, params, batch_size=256):
    x = np.asarray(x)
    out = []
    with dc.no_grad():
        for start in range(0, len(x), batch_size):
            out.append(forward(x[start:start + batch_size], params).data)
    if not out:
        return np.zeros((0, params.config.n_classes))
    return np.concatenate(out)


def predict(x, params, batch_size=256):
    return argmax_lowest(predict_proba(x, params, batch_size))


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(params, path):
    cfg = params.config.to_json().encode()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(cfg)), cfg]
    tensors = params.named_tensors()
    chunks.append(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path, dtype=None):
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint (bad magic)", offset=0)
    try:
        version, n = struct.unpack_from("<II", raw, 4)
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", offset=4)
        pos = 12
        config = ModelConfig.from_json(raw[pos:pos + n].decode())
        pos += n
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        state = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + ln].decode()
            pos += ln
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * size > len(raw):
                raise FormatError(f"tensor {name} truncated", offset=pos)
            state[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    params = NetworkParams.init(config, dtype=dtype)
    params.load_state_dict(state)
    return params
