import numpy as np

from .tensor import Tape, no_grad


def analytic_grad(f, inputs):
    """Gradients of scalar ``f(*inputs)`` w.r.t. each input, via the tape."""
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    with Tape() as tape:
        loss = f(*inputs)
    tape.backward(loss)
    return [np.array(x.grad, copy=True) for x in inputs]


def finite_diff_check(f, x, h=1e-5, others=()):
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``x`` may be one tensor or a list of tensors; ``f`` takes them positionally.
    Run it under float64 precision, otherwise the differences are noise.
    """
    inputs = list(x) if isinstance(x, (list, tuple)) else [x]
    grads = analytic_grad(f, inputs)
    worst = 0.0
    with no_grad():
        for tensor, grad in zip(inputs, grads):
            flat = tensor.data.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = float(f(*inputs).data)
                flat[i] = orig - h
                down = float(f(*inputs).data)
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
                worst = max(worst, err)
    return worst
