"""Minimal dense-tensor core with reverse-mode differentiation."""

from .fft import ComplexSpectrum, direct_dft, fft, hermitian_fold_index, ifft, radix2_fft
from .gradcheck import analytic_grad, finite_diff_check
from .ops import (
    avg_pool_time,
    conv2d_valid,
    cross_entropy,
    elu,
    layer_norm,
    linear,
    matmul,
    mse,
    softmax,
    ste_threshold,
)
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    div,
    exp,
    get_default_dtype,
    getitem,
    log,
    maximum,
    mean,
    mul,
    no_grad,
    power,
    precision,
    reshape,
    set_default_dtype,
    sigmoid,
    sqrt,
    stack,
    sub,
    sum_,
    take,
    tensor,
    transpose,
)
