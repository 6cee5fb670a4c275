"""Inter-trial statistic remixing (train only) and learned distribution alignment.

Remixing swaps per-channel mean/std between two trials of the same subject:
the output keeps the normalized waveform of ``a`` and takes the first and
second moments of ``b``. Alignment (CADA) rescales each trial's own moments
with sigmoid gates computed from those moments, and runs at train and test
time.
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import DimensionError, ParameterError

SIGMA_FLOOR = 1e-8


@dataclass
class ChannelStats:
    mu: np.ndarray
    sigma: np.ndarray


def channel_stats(x):
    """Per-channel mean and population std over the last (time) axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ParameterError("channel statistics need at least two samples")
    mu = x.mean(axis=-1)
    sigma = np.maximum(x.std(axis=-1), SIGMA_FLOOR)
    return ChannelStats(mu, sigma)


def inter_trial_remix(a, b):
    """``sigma_b * (a - mu_a) / sigma_a + mu_b`` channelwise; works on (..., C, T)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"remix needs equal shapes, got {a.shape} and {b.shape}")
    sa, sb = channel_stats(a), channel_stats(b)
    xt = (a - sa.mu[..., None]) / sa.sigma[..., None]
    return (sb.sigma[..., None] * xt + sb.mu[..., None]).astype(a.dtype)


@dataclass
class AugmentPolicy:
    p_remix: float = 0.5
    pairing: str = "same-subject"  # or "any-subject"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_remix <= 1.0:
            raise ParameterError(f"p_remix must lie in [0, 1], got {self.p_remix}")
        if self.pairing not in ("same-subject", "any-subject"):
            raise ParameterError(f"unknown pairing {self.pairing!r}")


class RemixCounter:
    """Counts remix calls; the trainer uses it to prove augmentation is off."""

    def __init__(self):
        self.calls = 0


def augment_batch(data, subjects, pool_data, pool_subjects, policy, rng, training=True,
                  counter=None, partner=None):
    """Remix each sample with probability ``p_remix`` against a random partner trial.

    ``data``/``subjects`` is the batch; partners are drawn uniformly from the
    pool trials of the same subject (or any subject). A subject with a single
    trial in the pool passes through unchanged. ``partner`` overrides the draw
    with a function ``(batch_index) -> pool index`` (used in tests).
    """
    if not training or policy.p_remix == 0.0:
        return data
    out = np.array(data, copy=True)
    subjects = np.asarray(subjects)
    pool_subjects = np.asarray(pool_subjects)
    by_subject = {}
    for s in np.unique(subjects):
        by_subject[s] = np.flatnonzero(pool_subjects == s) if policy.pairing == "same-subject" \
            else np.arange(len(pool_subjects))
    draws = rng.random(len(out))
    for i in range(len(out)):
        if draws[i] >= policy.p_remix:
            continue
        candidates = by_subject[subjects[i]]
        if len(candidates) < 2:
            continue
        j = partner(i) if partner is not None else candidates[rng.integers(len(candidates))]
        out[i] = inter_trial_remix(data[i], pool_data[j])
        if counter is not None:
            counter.calls += 1
    return out


# --- context-aware distribution alignment ----------------------------------

def logit(p):
    return float(np.log(p / (1.0 - p)))


@dataclass
class CadaParams:
    wf: dc.Tensor  # (C, C)
    bf: dc.Tensor  # (C,)
    wg: dc.Tensor
    bg: dc.Tensor

    @classmethod
    def identity(cls, channels, gate=0.95, dtype=None):
        """Zero maps and biases so that both gates start at ``gate``."""
        b = logit(gate)

        def t(v):
            return dc.tensor(v, requires_grad=True, dtype=dtype)

        return cls(t(np.zeros((channels, channels))), t(np.full(channels, b)),
                   t(np.zeros((channels, channels))), t(np.full(channels, b)))

    def tensors(self):
        return {"wf": self.wf, "bf": self.bf, "wg": self.wg, "bg": self.bg}


def cada_apply(x, params, return_gates=False):
    """Gate the per-channel moments of ``x`` (B, C, T) and re-synthesize it.

    gate_f = sigmoid((mu + sigma) @ Wf^T + bf), gate_g likewise; the output is
    ``gate_g*sigma * (x - mu)/sigma + gate_f*mu``.
    """
    x = dc.as_tensor(x)
    if x.ndim == 2:
        res = cada_apply(dc.reshape(x, (1,) + x.shape), params, return_gates)
        if return_gates:
            return (dc.reshape(res[0], x.shape),) + tuple(res[1:])
        return dc.reshape(res, x.shape)
    C, T = x.shape[-2], x.shape[-1]
    if params.wf.shape != (C, C) or params.wg.shape != (C, C):
        raise DimensionError(f"CADA maps must be ({C}, {C})")
    if T < 2:
        raise ParameterError("CADA needs at least two samples")
    mu = x.mean(axis=-1, keepdims=True)
    centred = x - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    sigma = dc.sqrt(dc.maximum(var, SIGMA_FLOOR ** 2))
    context = dc.reshape(mu + sigma, x.shape[:-1])  # (B, C)
    gate_f = dc.sigmoid(dc.matmul(context, dc.transpose(params.wf)) + params.bf)
    gate_g = dc.sigmoid(dc.matmul(context, dc.transpose(params.wg)) + params.bg)
    lead = x.shape[:-1] + (1,)
    mu2 = dc.reshape(gate_f, lead) * mu
    sigma2 = dc.reshape(gate_g, lead) * sigma
    out = sigma2 * (centred / sigma) + mu2
    if return_gates:
        return out, gate_f, gate_g
    return out
