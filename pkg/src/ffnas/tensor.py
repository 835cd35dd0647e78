"""Dense float64 tensors with taped reverse-mode differentiation.

Gradients are recorded only while a Tape is active; forward-only code just
calls the same ops without one. A tensor created by an op remembers its tape,
so ``backward(loss)`` can replay the records in reverse. Leaf tensors (the
ones built directly from data) accumulate into ``.grad``; intermediate
gradients live only for the duration of the traversal.

Broadcasting is deliberately narrow: elementwise binaries take equal shapes
or a 1-d operand matching the last axis (bias vectors). Anything fancier is
a ShapeError.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels
from .errors import ContractError, ShapeError


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_tape", "name")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._tape = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    @property
    def ndim(self):
        return self.values.ndim

    def item(self):
        if self.values.size != 1:
            raise ContractError(f"item() on tensor of size {self.values.size}")
        return float(self.values.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.values)

    def __repr__(self):
        grad = ", grad" if self.grad is not None else ""
        req = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{req}{grad})"

    # arithmetic sugar; scalars stay plain floats (no gradient to them)
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, c):
        return scale(self, 1.0 / float(c))

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed ops; reverse traversal drives backward.

    Tapes are confined to the thread that opened them, so independent
    graphs may run concurrently in separate threads.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.records)


_TLS = threading.local()


def _tape_stack():
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = _TLS.stack = []
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def _result(op, inputs, values, backward):
    """Build the output tensor and record the op if a tape is listening."""
    out = Tensor(values)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.records.append((inputs, out, backward))
    return out


def _flat(arr):
    return np.ascontiguousarray(arr).reshape(-1)


def _rows(arr):
    """Contiguous 2-d view (n, last_dim) of an array."""
    a = np.ascontiguousarray(arr)
    return a.reshape(-1, a.shape[-1]) if a.ndim != 2 else a


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _check_binary_shapes(a, b, op):
    if a.shape == b.shape:
        return
    # trailing-suffix broadcast: bias vectors, position tables
    if a.ndim < b.ndim and b.shape[b.ndim - a.ndim:] == a.shape:
        return
    if b.ndim < a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not "
                     "equal or trailing-axis broadcastable")


def _coerce(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def add(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_binary_shapes(a, b, "add")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", (a, b), a.values + b.values, bwd)


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_binary_shapes(a, b, "sub")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", (a, b), a.values - b.values, bwd)


def mul(a, b):
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return scale(a, float(b))
    if not isinstance(a, Tensor) and np.ndim(a) == 0:
        return scale(b, float(a))
    a, b = _coerce(a), _coerce(b)
    _check_binary_shapes(a, b, "mul")
    av, bv = a.values, b.values

    def bwd(g):
        return _unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)

    return _result("mul", (a, b), av * bv, bwd)


def scale(a, c):
    c = float(c)

    def bwd(g):
        return (g * c,)

    return _result("scale", (a,), a.values * c, bwd)


def add_const(a, arr):
    """Add a non-differentiable constant (full numpy broadcasting allowed)."""
    arr = np.asarray(arr, dtype=np.float64)

    def bwd(g):
        return (_unbroadcast(g, a.shape),)

    return _result("add_const", (a,), a.values + arr, bwd)


def maximum(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_binary_shapes(a, b, "max")
    av = np.broadcast_to(a.values, np.broadcast_shapes(a.shape, b.shape))
    bv = np.broadcast_to(b.values, av.shape)
    af, bf = _flat(av), _flat(bv)
    out = kernels.max_fwd(af, bf).reshape(av.shape)

    def bwd(g):
        gx, gy = kernels.max_bwd(af, bf, _flat(g))
        gx = gx.reshape(av.shape)
        gy = gy.reshape(av.shape)
        return _unbroadcast(gx, a.shape), _unbroadcast(gy, b.shape)

    return _result("max", (a, b), out, bwd)


def _unary(op, a, fwd_kernel, bwd_kernel, save_output):
    xf = _flat(a.values)
    yf = fwd_kernel(xf)
    saved = yf if save_output else xf
    shape = a.shape

    def bwd(g):
        return (bwd_kernel(saved, _flat(g)).reshape(shape),)

    return _result(op, (a,), yf.reshape(shape), bwd)


def relu(a):
    return _unary("relu", a, kernels.relu_fwd, kernels.relu_bwd, False)


def leaky_relu(a):
    return _unary("leaky_relu", a, kernels.leaky_relu_fwd, kernels.leaky_relu_bwd, False)


def elu(a):
    return _unary("elu", a, kernels.elu_fwd, kernels.elu_bwd, False)


def gelu(a):
    return _unary("gelu", a, kernels.gelu_fwd, kernels.gelu_bwd, False)


def swish(a):
    return _unary("swish", a, kernels.swish_fwd, kernels.swish_bwd, False)


def sigmoid(a):
    return _unary("sigmoid", a, kernels.sigmoid_fwd, kernels.sigmoid_bwd, True)


def tanh(a):
    return _unary("tanh", a, kernels.tanh_fwd, kernels.tanh_bwd, True)


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(bv, -1, -2))
        gb = np.matmul(np.swapaxes(av, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result("matmul", (a, b), np.matmul(av, bv), bwd)


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (np.transpose(g, inv),)

    return _result("transpose", (a,), np.transpose(a.values, axes).copy(), bwd)


def reshape(a, shape):
    old = a.shape

    def bwd(g):
        return (g.reshape(old),)

    return _result("reshape", (a,), a.values.reshape(shape).copy(), bwd)


def tsum(a, axis=None):
    shape = a.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result("sum", (a,), a.values.sum(axis=axis), bwd)


def tmean(a, axis=None):
    shape = a.shape
    n = a.values.size if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return _result("mean", (a,), a.values.mean(axis=axis), bwd)


def _move_last(arr, axis):
    return np.ascontiguousarray(np.moveaxis(arr, axis, -1))


def softmax(a, axis=-1):
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    moved = _move_last(a.values, axis)
    mshape = moved.shape
    y2 = kernels.softmax_fwd(moved.reshape(-1, mshape[-1]))
    out = np.moveaxis(y2.reshape(mshape), -1, axis).copy()

    def bwd(g):
        g2 = _move_last(g, axis).reshape(-1, mshape[-1])
        gx = kernels.softmax_bwd(y2, g2).reshape(mshape)
        return (np.moveaxis(gx, -1, axis).copy(),)

    return _result("softmax", (a,), out, bwd)


def log_softmax(a, axis=-1):
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"log_softmax: axis {axis} invalid for shape {a.shape}")
    moved = _move_last(a.values, axis)
    mshape = moved.shape
    y2 = kernels.log_softmax_fwd(moved.reshape(-1, mshape[-1]))
    out = np.moveaxis(y2.reshape(mshape), -1, axis).copy()

    def bwd(g):
        g2 = _move_last(g, axis).reshape(-1, mshape[-1])
        gx = kernels.log_softmax_bwd(y2, g2).reshape(mshape)
        return (np.moveaxis(gx, -1, axis).copy(),)

    return _result("log_softmax", (a,), out, bwd)


def layer_norm(x, gamma, beta, eps=1e-12):
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma/beta must have shape ({d},), "
                         f"got {gamma.shape} and {beta.shape}")
    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")
    x2 = _rows(x.values)
    y2, mean, rstd = kernels.layer_norm_fwd(x2, gamma.values, beta.values, eps)
    gv = gamma.values
    shape = x.shape

    def bwd(g):
        g2 = _rows(g)
        dx, dgamma, dbeta = kernels.layer_norm_bwd(x2, gv, mean, rstd, g2)
        return dx.reshape(shape), dgamma, dbeta

    return _result("layer_norm", (x, gamma, beta), y2.reshape(shape), bwd)


def embedding(table, ids):
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise ShapeError(f"embedding: ids outside table of {table.shape[0]} rows")
    tshape = table.shape

    def bwd(g):
        gt = np.zeros(tshape)
        np.add.at(gt, ids, g)
        return (gt,)

    return _result("embedding", (table,), table.values[ids], bwd)


def gather_last(a, idx):
    """out[...] = a[..., idx[...]]; idx shape must equal a.shape[:-1]."""
    idx = np.asarray(idx)
    if idx.shape != a.shape[:-1]:
        raise ShapeError(f"gather_last: idx shape {idx.shape} != {a.shape[:-1]}")
    picked = np.take_along_axis(a.values, idx[..., None], axis=-1)[..., 0]
    shape = a.shape

    def bwd(g):
        ga = np.zeros(shape)
        np.put_along_axis(ga, idx[..., None], g[..., None], axis=-1)
        return (ga,)

    return _result("gather_last", (a,), picked, bwd)


def backward(loss):
    """Populate .grad of every requires_grad leaf reachable from `loss`."""
    if loss.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise ContractError("loss is not attached to a tape (no grad recorded)")

    pending = {id(loss): np.array(1.0)}
    for inputs, out, bwd in reversed(tape.records):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        grads = bwd(g)
        for t, gt in zip(inputs, grads):
            if gt is None or not t.requires_grad:
                continue
            if t._tape is None:  # leaf: accumulate persistently
                if t.grad is None:
                    t.grad = np.zeros_like(t.values)
                t.grad += gt
            else:
                acc = pending.get(id(t))
                if acc is None:
                    pending[id(t)] = np.asarray(gt, dtype=np.float64).copy()
                else:
                    acc += gt
