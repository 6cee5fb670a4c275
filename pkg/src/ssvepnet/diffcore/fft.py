"""Discrete Fourier transforms along the last axis, with gradients.

Power-of-two lengths use an iterative radix-2 Cooley-Tukey transform after a
bit-reversal permutation; every other length falls back to the direct O(N^2)
matrix DFT (epoch lengths such as 75 or 175 samples are not powers of two).
The kernels always run in complex128 and results are cast back to the input
precision.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import DimensionError, NumericContractError
from .tensor import Tensor, as_tensor, getitem, make_result, stack, tensor

IMAG_TOLERANCE = 1e-6


def is_power_of_two(n):
    return n >= 1 and n & (n - 1) == 0


@lru_cache(maxsize=64)
def _bit_reverse_permutation(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(m):
    return np.exp(-2j * np.pi * np.arange(m // 2) / m)


@lru_cache(maxsize=64)
def _dft_matrix(n):
    kn = np.outer(np.arange(n), np.arange(n)) % n  # exact phase index keeps large N accurate
    return np.exp(-2j * np.pi * kn / n)


def radix2_fft(a):
    """Forward transform of complex ``a`` (..., N) with N a power of two."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    if not is_power_of_two(n):
        raise DimensionError(f"radix-2 path needs a power-of-two length, got {n}")
    lead = a.shape[:-1]
    out = a[..., _bit_reverse_permutation(n)]
    m = 2
    while m <= n:
        half = m // 2
        blocks = out.reshape(*lead, n // m, m)
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(m)
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        m *= 2
    return out


def direct_dft(a):
    """Forward transform by explicit summation (matrix product)."""
    a = np.asarray(a, dtype=np.complex128)
    return a @ _dft_matrix(a.shape[-1]).T


def dft(a):
    n = np.shape(a)[-1]
    if n == 0:
        raise DimensionError("transform length must be >= 1")
    return radix2_fft(a) if is_power_of_two(n) else direct_dft(a)


def idft(a):
    """Inverse transform including the 1/N factor, via the conjugation identity."""
    a = np.asarray(a, dtype=np.complex128)
    return np.conj(dft(np.conj(a))) / a.shape[-1]


@dataclass
class ComplexSpectrum:
    """Real and imaginary parts of a spectrum as two real tensors (..., N)."""

    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise DimensionError(f"re/im shapes differ: {self.re.shape} vs {self.im.shape}")

    @property
    def n(self):
        return self.re.shape[-1]

    @property
    def shape(self):
        return self.re.shape

    def to_numpy(self):
        return self.re.data + 1j * self.im.data

    @classmethod
    def from_numpy(cls, values, dtype=None, requires_grad=False):
        values = np.asarray(values, dtype=np.complex128)
        return cls(tensor(values.real.copy(), requires_grad=requires_grad, dtype=dtype),
                   tensor(values.imag.copy(), requires_grad=requires_grad, dtype=dtype))


@lru_cache(maxsize=64)
def _real_basis(n, dtype):
    # cos/sin DFT matrices (symmetric) for the real-arithmetic path
    kn = np.outer(np.arange(n), np.arange(n)) % n
    angle = 2 * np.pi * kn / n
    return np.cos(angle).astype(dtype), np.sin(angle).astype(dtype)


def _fft_packed(x):
    # output (..., 2, N): [re, im]
    n = x.shape[-1]
    if not is_power_of_two(n):
        cos, sin = _real_basis(n, np.dtype(x.dtype))
        out = np.stack([x.data @ cos, -(x.data @ sin)], axis=-2)

        def bw_real(g):
            return (g[..., 0, :] @ cos - g[..., 1, :] @ sin,)

        return make_result(out, (x,), bw_real)
    spec = dft(x.data)
    out = np.stack([spec.real, spec.imag], axis=-2).astype(x.dtype)

    def bw(g):
        # dL/dx[n] = Re sum_k (g_re + j g_im)[k] e^{+j 2 pi k n / N}
        upstream = g[..., 0, :] + 1j * g[..., 1, :]
        return (np.real(np.conj(dft(np.conj(upstream)))).astype(x.dtype),)

    return make_result(out, (x,), bw)


def fft(x):
    """Forward DFT of a real tensor along its last axis."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("fft needs a non-empty last axis")
    packed = _fft_packed(x)
    return ComplexSpectrum(getitem(packed, (..., 0, slice(None))), getitem(packed, (..., 1, slice(None))))


def _ifft_packed(packed):
    re, im = packed.data[..., 0, :], packed.data[..., 1, :]
    n = re.shape[-1]
    real_path = not is_power_of_two(n)
    if real_path:
        cos, sin = _real_basis(n, np.dtype(packed.dtype))
        out_re = (re @ cos - im @ sin) / n
        out_im = (re @ sin + im @ cos) / n
    else:
        full = idft(re + 1j * im)
        out_re, out_im = full.real, full.imag
    scale = max(1.0, float(np.max(np.abs(out_re), initial=0.0)))
    residual = float(np.max(np.abs(out_im), initial=0.0))
    if residual > IMAG_TOLERANCE * scale:
        raise NumericContractError(
            f"inverse transform is not real: imaginary residual {residual:.3g} "
            "(input spectrum is not Hermitian-symmetric)")
    out = out_re.astype(packed.dtype)

    def bw(g):
        if real_path:
            return (np.stack([g @ cos / n, -(g @ sin) / n], axis=-2),)
        # x = Re(idft(F)); (dL/dre + j dL/dim) = dft(g) / N
        back = dft(g) / n
        return (np.stack([back.real, back.imag], axis=-2).astype(packed.dtype),)

    return make_result(out, (packed,), bw)


def ifft(spectrum):
    """Inverse DFT back to a real tensor; the spectrum must be Hermitian-symmetric."""
    if spectrum.n == 0:
        raise DimensionError("ifft needs at least one bin")
    return _ifft_packed(stack([spectrum.re, spectrum.im], axis=-2))


def hermitian_fold_index(n):
    """Map each full-spectrum bin k to its one-sided index min(k, n - k)."""
    k = np.arange(n)
    return np.minimum(k, (n - k) % n)
