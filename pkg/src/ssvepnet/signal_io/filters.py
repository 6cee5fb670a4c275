"""Butterworth band-pass design (bilinear transform) and zero-phase filtering."""

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError


@dataclass(frozen=True)
class FilterSpec:
    """``order`` is the order of the band-pass filter (twice the low-pass prototype order)."""

    low_hz: float = 6.0
    high_hz: float = 90.0
    sample_rate: float = 250.0
    order: int = 4

    def __post_init__(self):
        if self.order <= 0 or self.order % 2:
            raise ParameterError(f"band-pass order must be a positive even integer, got {self.order}")
        nyquist = self.sample_rate / 2.0
        if not 0 < self.low_hz < self.high_hz:
            raise ParameterError(f"need 0 < low < high, got {self.low_hz}, {self.high_hz}")
        if self.high_hz >= nyquist:
            raise ParameterError(f"high cut {self.high_hz} Hz must be below Nyquist {nyquist} Hz")


def butter_design(spec):
    """Second-order sections ``(n, 6)`` rows ``[b0 b1 b2 1 a1 a2]``.

    Analog Butterworth low-pass prototype, low-pass to band-pass transform at
    pre-warped edges, then the bilinear transform.
    """
    n = spec.order // 2
    fs = float(spec.sample_rate)
    fs2 = 2.0 * fs
    wl = fs2 * np.tan(np.pi * spec.low_hz / fs)
    wh = fs2 * np.tan(np.pi * spec.high_hz / fs)
    w0 = np.sqrt(wl * wh)
    bw = wh - wl

    proto = np.exp(1j * np.pi * (2 * np.arange(n) + n + 1) / (2 * n))
    half = proto * bw / 2.0
    disc = np.sqrt(half * half - w0 * w0 + 0j)
    analog = np.concatenate([half + disc, half - disc])
    gain = bw ** n  # n analog zeros at s = 0

    digital = (fs2 + analog) / (fs2 - analog)
    # zeros: n at z = +1 (from s = 0) and n at z = -1 (from s = inf)
    gain_d = gain * np.real(fs2 ** n / np.prod(fs2 - analog))

    upper = sorted((p for p in digital if p.imag > 1e-12), key=abs)
    real = sorted(p.real for p in digital if abs(p.imag) <= 1e-12)
    dens = [[1.0, -2.0 * p.real, abs(p) ** 2] for p in upper]
    for r1, r2 in zip(real[0::2], real[1::2]):
        dens.append([1.0, -(r1 + r2), r1 * r2])
    if len(dens) != n:
        raise ParameterError("pole pairing failed; filter design is degenerate")
    dens.sort(key=lambda d: d[2])  # poles nearest the unit circle last

    share = abs(gain_d) ** (1.0 / n)
    sign = np.sign(gain_d)
    sos = np.zeros((n, 6))
    for i, den in enumerate(dens):
        b = np.array([1.0, 0.0, -1.0]) * share
        if i == 0:
            b *= sign
        sos[i, :3] = b
        sos[i, 3:] = den
    return sos


def sos_response(sos, freqs_hz, sample_rate):
    """Complex frequency response of the cascade at the given frequencies."""
    z = np.exp(-1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / sample_rate)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return h


def _section_zi(section):
    b0, b1, b2, _, a1, a2 = section
    lhs = np.array([[1.0 + a1, -1.0], [a2, 1.0]])
    rhs = np.array([b1 - a1 * b0, b2 - a2 * b0])
    return np.linalg.solve(lhs, rhs)


def sosfilt_zi(sos):
    """Initial states giving the steady-state response to a unit step."""
    zi = np.zeros((len(sos), 2))
    scale = 1.0
    for i, section in enumerate(sos):
        zi[i] = scale * _section_zi(section)
        scale *= section[:3].sum() / section[3:].sum()
    return zi


def sosfilt(sos, x, zi=None):
    """Filter along the last axis (transposed direct form II), vectorized over leading axes.

    ``zi`` has shape ``(n_sections, 2, *x.shape[:-1])`` when given.
    """
    y = np.array(x, dtype=np.float64, copy=True)
    lead = y.shape[:-1]
    T = y.shape[-1]
    for s, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        if zi is None:
            z1 = np.zeros(lead)
            z2 = np.zeros(lead)
        else:
            z1 = np.array(zi[s, 0], dtype=np.float64, copy=True)
            z2 = np.array(zi[s, 1], dtype=np.float64, copy=True)
        for t in range(T):
            xt = y[..., t]
            yt = b0 * xt + z1
            z1 = b1 * xt - a1 * yt + z2
            z2 = b2 * xt - a2 * yt
            y[..., t] = yt
    return y


def filtfilt(x, sos, padlen=None):
    """Zero-phase filtering along the last axis with odd-reflection edge padding.

    ``x`` may be an array (..., T) or an :class:`EpochSet`; the same type is returned.
    The default pad length is three times the filter order.
    """
    from .epochs import EpochSet

    if isinstance(x, EpochSet):
        return x.replace(data=filtfilt(x.data, sos, padlen).astype(np.float32))
    x = np.asarray(x, dtype=np.float64)
    order = 2 * len(sos)
    padlen = 3 * order if padlen is None else padlen
    T = x.shape[-1]
    if T <= padlen:
        raise ParameterError(f"signal of {T} samples too short for filtfilt (needs > {padlen})")
    if padlen:
        left = 2 * x[..., :1] - x[..., padlen:0:-1]
        right = 2 * x[..., -1:] - x[..., -2:-padlen - 2:-1]
        ext = np.concatenate([left, x, right], axis=-1)
    else:
        ext = x
    zi = sosfilt_zi(sos)
    zi_full = zi[:, :, None] * np.ones((1, 1, int(np.prod(x.shape[:-1], dtype=int))))
    flat = ext.reshape(-1, ext.shape[-1])
    fwd = sosfilt(sos, flat, zi_full * flat[:, 0])
    bwd = sosfilt(sos, fwd[:, ::-1], zi_full * fwd[:, -1])[:, ::-1]
    if padlen:
        bwd = bwd[:, padlen:-padlen]
    return bwd.reshape(x.shape)


def bandpass(x, low_hz, high_hz, sample_rate, order=4):
    return filtfilt(x, butter_design(FilterSpec(low_hz, high_hz, sample_rate, order)))
