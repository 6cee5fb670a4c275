"""Adaptive spectrum denoising block.

Wiring (pre-norm, two residual branches)::

    u  = LN1(x)                      # over channels at every time point
    y1 = x + IFFT(Mf * mask(Pm > theta) * FFT(u))
    y2 = y1 + FF(LN2(y1))            # FF: C -> 2C -> C with ELU

``Pm`` is the power spectrum of each channel divided by its median over the
bins. The mask is hard in the forward pass; ``theta`` receives a
sigmoid-surrogate gradient with temperature ``tau``. Mask and weights are
defined on one-sided bins and mirrored onto conjugate bins, which keeps the
inverse transform real.
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore.fft import ComplexSpectrum, hermitian_fold_index
from .errors import DimensionError, NumericContractError

MEDIAN_FLOOR = 1e-12


@dataclass
class AsdmParams:
    theta: dc.Tensor  # scalar
    mf: dc.Tensor  # (N // 2 + 1,)
    ln1_gain: dc.Tensor
    ln1_bias: dc.Tensor
    ln2_gain: dc.Tensor
    ln2_bias: dc.Tensor
    ff_w1: dc.Tensor  # (C, 2C)
    ff_b1: dc.Tensor
    ff_w2: dc.Tensor  # (2C, C)
    ff_b2: dc.Tensor
    tau: float = 0.05

    @classmethod
    def init(cls, channels, n_samples, rng, dtype=None, tau=0.05):
        C, H = channels, 2 * channels

        def t(v):
            return dc.tensor(v, requires_grad=True, dtype=dtype)

        def fan_in(shape):
            bound = 1.0 / np.sqrt(shape[0])
            return rng.uniform(-bound, bound, size=shape)

        w1 = fan_in((C, H))
        b1 = fan_in((C, H))[0]
        w2 = fan_in((H, C))
        b2 = fan_in((H, C))[0]
        return cls(
            theta=t(rng.uniform(0.0, 1.0)),
            mf=t(np.ones(n_samples // 2 + 1)),
            ln1_gain=t(np.ones(C)), ln1_bias=t(np.zeros(C)),
            ln2_gain=t(np.ones(C)), ln2_bias=t(np.zeros(C)),
            ff_w1=t(w1), ff_b1=t(b1), ff_w2=t(w2), ff_b2=t(b2),
            tau=tau,
        )

    def tensors(self):
        names = ("theta", "mf", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
                 "ff_w1", "ff_b1", "ff_w2", "ff_b2")
        return {name: getattr(self, name) for name in names}


def power_spectrum(spectrum):
    """P[k] = |F[k]|^2 / N as a tensor."""
    n = spectrum.n
    return (spectrum.re * spectrum.re + spectrum.im * spectrum.im) * (1.0 / n)


def median_normalize(power):
    """Divide each row of ``power`` (..., N) by its median over the last axis."""
    p = power.data if isinstance(power, dc.Tensor) else np.asarray(power, dtype=float)
    med = np.median(p, axis=-1, keepdims=True)
    return p / np.maximum(med, MEDIAN_FLOOR)


def _fold(pm):
    # average each bin with its mirror so the mask is exactly conjugate-symmetric
    idx = (-np.arange(pm.shape[-1])) % pm.shape[-1]
    return 0.5 * (pm + pm[..., idx])


def threshold_mask(spectrum, pm, theta, tau=0.05):
    """Zero the bins with ``Pm <= theta``; returns the filtered spectrum and the mask."""
    theta = dc.as_tensor(theta)
    pm = _fold(np.asarray(pm, dtype=theta.dtype))
    if pm.shape != spectrum.shape:
        raise DimensionError(f"Pm shape {pm.shape} != spectrum shape {spectrum.shape}")
    mask = dc.ste_threshold(pm, theta, tau)
    return ComplexSpectrum(spectrum.re * mask, spectrum.im * mask), mask


def spectral_weighting(spectrum, mf):
    """Multiply bin k and its mirror N - k by the same one-sided weight ``mf[k]``."""
    mf = dc.as_tensor(mf)
    n = spectrum.n
    if mf.shape != (n // 2 + 1,):
        raise DimensionError(f"need {n // 2 + 1} one-sided weights for N={n}, got {mf.shape}")
    full = dc.take(mf, hermitian_fold_index(n))
    return ComplexSpectrum(spectrum.re * full, spectrum.im * full)


def denoise(u, theta, mf, tau=0.05, return_mask=False):
    """FFT -> threshold -> weight -> IFFT along the last axis of ``u``."""
    spectrum = dc.fft(u)
    with dc.no_grad():
        pm = median_normalize(power_spectrum(spectrum))
    filtered, mask = threshold_mask(spectrum, pm, theta, tau)
    weighted = spectral_weighting(filtered, mf)
    out = dc.ifft(weighted)
    if return_mask:
        return out, mask
    return out


def _channel_layer_norm(x, gain, bias):
    # x: (B, C, T) -> normalize across channels at every time point
    xt = dc.transpose(x, (0, 2, 1))
    return dc.transpose(dc.layer_norm(xt, gain, bias), (0, 2, 1))


def asdm_forward(x, params, return_parts=False):
    """Apply the denoising block to ``x`` of shape (B, C, T)."""
    x = dc.as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"asdm expects (B, C, T), got {x.shape}")
    if x.shape[-1] < 4:
        raise DimensionError("asdm needs at least 4 time samples")
    if not np.all(np.isfinite(x.data)):
        raise NumericContractError("non-finite input to the denoising block")
    u = _channel_layer_norm(x, params.ln1_gain, params.ln1_bias)
    d = denoise(u, params.theta, params.mf, params.tau)
    y1 = x + d
    zt = dc.layer_norm(dc.transpose(y1, (0, 2, 1)), params.ln2_gain, params.ln2_bias)  # (B, T, C)
    h = dc.elu(dc.linear(zt, params.ff_w1, params.ff_b1))
    f = dc.transpose(dc.linear(h, params.ff_w2, params.ff_b2), (0, 2, 1))
    y2 = y1 + f
    if return_parts:
        return y2, {"ln1": u, "denoised": d, "y1": y1, "ff": f}
    return y2


def retained_fraction(x, theta, tau=0.05):
    """Fraction of bins the hard mask keeps for each row of ``x`` (..., N)."""
    with dc.no_grad():
        spectrum = dc.fft(dc.as_tensor(x))
        pm = _fold(median_normalize(power_spectrum(spectrum)))
    return (pm > float(np.asarray(theta))).mean(axis=-1)


def tone_noise_trials(n_trials, n_samples, rng, amplitude=1.0, margin=6):
    """Unit-variance white noise plus one sinusoid per trial at a random integer bin.

    Returns (noisy, clean, bins); the bins avoid DC and Nyquist by ``margin``.
    """
    t = np.arange(n_samples)
    bins = rng.integers(margin, n_samples // 2 - margin, size=n_trials)
    phase = rng.uniform(-np.pi, np.pi, size=(n_trials, 1))
    clean = amplitude * np.sin(2 * np.pi * bins[:, None] * t / n_samples + phase)
    return clean + rng.normal(size=clean.shape), clean, bins


def fit_threshold(noisy, clean, theta0=0.5, epochs=150, lr=0.05, batch_size=32, seed=0,
                  tau=0.05):
    """Learn only ``theta`` by minimizing the MSE between ``denoise(noisy)`` and ``clean``.

    Unit spectral weights; Adam on the surrogate gradient. Returns the list of
    end-of-epoch threshold values, starting with ``theta0``.
    """
    rng = np.random.default_rng(seed)
    theta = dc.tensor(theta0, requires_grad=True)
    mf = np.ones(noisy.shape[-1] // 2 + 1)
    opt = dc.Adam([theta], lr=lr)
    trace = [float(theta.data)]
    for _ in range(epochs):
        order = rng.permutation(len(noisy))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            with dc.Tape() as tape:
                err = denoise(dc.tensor(noisy[idx]), theta, mf, tau) - clean[idx]
                loss = (err * err).mean()
            tape.backward(loss)
            opt.step()
        trace.append(float(theta.data))
    return trace


def bin_kept(x, theta, bins):
    """Whether the hard mask keeps bin ``bins[i]`` of row ``x[i]``."""
    with dc.no_grad():
        pm = _fold(median_normalize(power_spectrum(dc.fft(dc.as_tensor(x)))))
    return pm[np.arange(len(bins)), bins] > float(theta)
