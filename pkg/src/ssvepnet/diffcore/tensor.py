"""Dense tensors recorded on a reverse-mode gradient tape.

Every differentiable operation appends one node to the active :class:`Tape`.
Because nodes are appended in execution order, walking the list backwards is
already a valid reverse topological order, so ``backward`` needs no graph sort.
"""

from __future__ import annotations

import contextlib
import itertools
import threading

import numpy as np

from ..errors import ContractError, DimensionError

_local = threading.local()
_ids = itertools.count()
_default_dtype = np.float32


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype):
    """Set the build-wide float dtype (float32 for training, float64 for checks)."""
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    _default_dtype = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default dtype, e.g. ``with precision(np.float64):``."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def _tape_stack():
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def grad_enabled():
    return getattr(_local, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable recording; used for frozen-parameter inference."""
    previous = grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def active_tape():
    stack = _tape_stack()
    if stack:
        return stack[-1]
    tape = getattr(_local, "default_tape", None)
    if tape is None:
        tape = _local.default_tape = Tape()
    return tape


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of executed operations.

    Use as a context manager so that operations inside the block are recorded
    here rather than on the thread's default tape::

        with Tape() as tape:
            loss = model(x)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes = []
        self._touched = {}

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("tape stack corrupted")
        stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, parents, backward):
        self.nodes.append(_Node(out, parents, backward))
        self._touched[out.id] = out
        for p in parents:
            if p.requires_grad:
                self._touched[p.id] = p

    def owns(self, tensor):
        return tensor.id in self._touched

    def backward(self, loss):
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not produced on this tape")
        grads = {loss.id: np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(node.out.id, None)
            if g is None:
                continue
            node.out._accumulate(g)
            pgrads = node.backward(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                if pg.shape != p.shape:
                    raise DimensionError(f"gradient shape {pg.shape} != tensor shape {p.shape}")
                prev = grads.get(p.id)
                grads[p.id] = pg if prev is None else prev + pg
        # whatever is left belongs to leaves
        for tid, g in grads.items():
            t = self._touched.get(tid)
            if t is not None:
                t._accumulate(g)

    def clear(self):
        """Zero every gradient seen by this tape and forget the recorded nodes."""
        for t in self._touched.values():
            t.zero_grad()
        self.nodes = []
        self._touched = {}


def backward(loss, tape=None):
    tape = loss._tape if tape is None else tape
    if tape is None:
        raise ContractError("loss is not attached to any tape")
    tape.backward(loss)


def _as_array(value, dtype=None):
    dtype = _default_dtype if dtype is None else dtype
    return np.asarray(value, dtype=dtype)


class Tensor:
    __slots__ = ("data", "requires_grad", "_grad", "_tape", "id", "name")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            arr = data
        else:
            arr = _as_array(data, dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._tape = None
        self.id = next(_ids)
        self.name = name

    # --- bookkeeping -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def grad(self):
        if self._grad is None and self.requires_grad:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = None if value is None else np.array(value, dtype=self.data.dtype, copy=True)

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self._grad is None:
            self._grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self._grad += g

    def zero_grad(self):
        if self._grad is not None:
            self._grad[...] = 0

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def backward(self):
        backward(self)

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{tag})"

    def __len__(self):
        return self.shape[0]

    # --- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        from .ops import matmul

        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def tensor(data, requires_grad=False, dtype=None, name=None):
    """New tensor in ``dtype`` (default: the current default dtype)."""
    if isinstance(data, Tensor):
        data = data.data
    return Tensor(data, requires_grad=requires_grad, dtype=dtype or _default_dtype, name=name)


def as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype or _default_dtype))


def make_result(data, parents, backward_fn):
    """Wrap ``data`` as the output of an op and record it if any parent needs grads."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape = active_tape()
        out._tape = tape
        tape.record(out, tuple(parents), backward_fn)
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _pair(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        return a, b
    if isinstance(a, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


# --- elementwise primitives -----------------------------------------------

def add(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _pair(a, b)

    def bw(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data

    def bw(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), bw)


def power(a, exponent):
    exponent = float(exponent)
    out = a.data ** exponent

    def bw(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return make_result(out, (a,), bw)


def maximum(a, floor):
    """Elementwise ``max(a, floor)`` for a scalar floor; no gradient below the floor."""
    keep = a.data > floor
    out = np.where(keep, a.data, np.asarray(floor, dtype=a.dtype))

    def bw(g):
        return (g * keep,)

    return make_result(out, (a,), bw)


def exp(a):
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a):
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    out = np.sqrt(a.data)
    return make_result(out, (a,), lambda g: (g * 0.5 / out,))


def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),))


def sum_(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return make_result(np.asarray(out, dtype=a.dtype), (a,), bw)


def mean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return sum_(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape):
    out = a.data.reshape(shape)
    return make_result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    out = np.transpose(a.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return make_result(out, (a,), lambda g: (np.transpose(g, inverse),))


def getitem(a, index):
    if isinstance(index, Tensor):
        raise TypeError("index with numpy arrays, not tensors")
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return make_result(np.array(out, copy=True), (a,), bw)


def take(a, indices, axis=-1):
    """Gather along ``axis``; repeated indices accumulate on backward."""
    indices = np.asarray(indices)
    out = np.take(a.data, indices, axis=axis)
    ax = axis % a.ndim

    def bw(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, ax, 0)
        np.add.at(moved, indices, np.moveaxis(g, ax, 0))
        return (full,)

    return make_result(out, (a,), bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(out, tuple(tensors), bw)
