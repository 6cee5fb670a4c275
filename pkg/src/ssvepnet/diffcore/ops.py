"""Neural-network operations with hand-written backward rules."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ParameterError
from .tensor import Tensor, as_tensor, make_result, unbroadcast


def matmul(a, b):
    """``a @ b`` for ``a`` of shape (..., M, K) and a 2-D ``b`` of shape (K, N)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_result(out, (a, b), bw)


def linear(x, weight, bias):
    """Affine map over the last axis; ``weight`` is (in, out)."""
    return matmul(x, weight) + bias


def conv2d_valid(x, kernel, bias):
    """Valid (unpadded) 2-D cross-correlation with unit stride.

    x: (B, Cin, H, W), kernel: (Cout, Cin, kh, kw), bias: (Cout,).
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
    B, cin, H, W = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(f"kernel expects {kcin} input channels, input has {cin}")
    if kh > H or kw > W:
        raise DimensionError(f"kernel {kernel.shape} larger than input {x.shape}")
    if bias.shape != (cout,):
        raise DimensionError(f"bias shape {bias.shape} != ({cout},)")
    Ho, Wo = H - kh + 1, W - kw + 1
    # im2col once; the same matrix serves the kernel gradient
    cols = sliding_window_view(x.data, (kh, kw), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5)
    cols = cols.reshape(B * Ho * Wo, cin * kh * kw)
    kmat = kernel.data.reshape(cout, -1)
    out = (cols @ kmat.T).reshape(B, Ho, Wo, cout).transpose(0, 3, 1, 2)
    out = out + bias.data[None, :, None, None]

    def bw(g):
        gk = gb = gx = None
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        if kernel.requires_grad:
            gk = (g2.T @ cols).reshape(kernel.shape)
        if bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            # column gradients laid out (cin, kh, kw, B, Ho, Wo) so each shift adds a contiguous block
            gcols = (kmat.T @ g2.T).reshape(cin, kh, kw, B, Ho, Wo)
            acc = np.zeros((cin, B, H, W), dtype=x.data.dtype)
            for p in range(kh):
                for q in range(kw):
                    acc[:, :, p:p + Ho, q:q + Wo] += gcols[:, p, q]
            gx = acc.transpose(1, 0, 2, 3)
        return gx, gk, gb

    return make_result(out, (x, kernel, bias), bw)


def elu(x, alpha=1.0):
    if alpha <= 0:
        raise ParameterError("ELU alpha must be positive")
    x = as_tensor(x)
    pos = x.data > 0
    neg_part = alpha * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, neg_part)

    def bw(g):
        return (g * np.where(pos, 1.0, neg_part + alpha).astype(x.dtype),)

    return make_result(out, (x,), bw)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis (population variance), then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    D = x.shape[-1] if x.ndim else 0
    if D == 0:
        raise DimensionError("layer_norm over an empty axis")
    if gain.shape != (D,) or bias.shape != (D,):
        raise DimensionError(f"gain/bias must have shape ({D},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        gx = gg = gb = None
        if gain.requires_grad:
            gg = (g * xhat).reshape(-1, D).sum(axis=0)
        if bias.requires_grad:
            gb = g.reshape(-1, D).sum(axis=0)
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return make_result(out, (x, gain, bias), bw)


def softmax(x):
    """Softmax over the last axis, computed with max subtraction."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result(out, (x,), bw)


LOG_CLAMP = 1e-12


def cross_entropy(probs, onehot):
    """Mean over rows of ``-sum(y * log(p))`` with ``p`` clamped at 1e-12."""
    probs = as_tensor(probs)
    y = onehot.data if isinstance(onehot, Tensor) else np.asarray(onehot, dtype=probs.dtype)
    if probs.shape != y.shape or probs.ndim != 2:
        raise DimensionError(f"cross_entropy shapes differ: {probs.shape} vs {y.shape}")
    n = probs.shape[0]
    clamped = np.maximum(probs.data, LOG_CLAMP)
    loss = -(y * np.log(clamped)).sum() / n

    def bw(g):
        grad = np.where(probs.data > LOG_CLAMP, -y / clamped, 0.0) / n
        return (grad.astype(probs.dtype) * g,)

    return make_result(np.asarray(loss, dtype=probs.dtype), (probs,), bw)


def avg_pool_time(x, width):
    """Non-overlapping means over the last axis; a trailing remainder is dropped."""
    if width <= 0:
        raise ParameterError(f"pool width must be >= 1, got {width}")
    x = as_tensor(x)
    T = x.shape[-1]
    n = T // width
    if n == 0:
        raise DimensionError(f"pool width {width} exceeds length {T}")
    lead = x.shape[:-1]
    out = x.data[..., : n * width].reshape(*lead, n, width).mean(axis=-1)

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[..., : n * width] = np.repeat(g / width, width, axis=-1)
        return (gx,)

    return make_result(out, (x,), bw)


def ste_threshold(score, theta, tau):
    """Hard mask ``score > theta`` whose gradient w.r.t. ``theta`` is a sigmoid surrogate.

    ``score`` is treated as a constant. Backward uses
    d mask / d theta = -s (1 - s) / tau with s = sigmoid((score - theta) / tau).
    """
    if tau <= 0:
        raise ParameterError("tau must be positive")
    theta = as_tensor(theta)
    score = score.data if isinstance(score, Tensor) else np.asarray(score)
    out = (score > theta.data).astype(theta.dtype)

    def bw(g):
        z = np.clip((score - theta.data) / tau, -60.0, 60.0)
        s = 1.0 / (1.0 + np.exp(-z))
        return (unbroadcast(-(g * s * (1.0 - s) / tau), theta.shape).astype(theta.dtype),)

    return make_result(out, (theta,), bw)


def mse(a, b):
    d = a - b
    return (d * d).mean()
