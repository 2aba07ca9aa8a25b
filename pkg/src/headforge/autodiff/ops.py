"""Differentiable op kinds for the tape engine.

Every public function builds one tape node with a hand-written VJP.
apply() dispatches on the kind name so callers can drive the engine
generically; unknown kinds are rejected.
"""
from __future__ import annotations

import builtins

import numpy as np

from .engine import OpError, ShapeError, Tensor, astensor, make_op

_KINDS: dict[str, callable] = {}


def _register(fn):
    _KINDS[fn.__name__] = fn
    return fn


def apply(kind: str, *args, **kwargs) -> Tensor:
    """Dispatch an op by kind name."""
    fn = _KINDS.get(kind)
    if fn is None:
        raise OpError(f"unknown op kind: {kind!r} (known: {sorted(_KINDS)})")
    return fn(*args, **kwargs)


def op_kinds() -> list[str]:
    return sorted(_KINDS)


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, astensor(b, like=a)
    if isinstance(b, Tensor):
        return astensor(a, like=b), b
    return astensor(a), astensor(b)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to shape, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


# -- arithmetic ---------------------------------------------------------


@_register
def add(a, b):
    a, b = _pair(a, b)
    out = a.data + b.data
    return make_op(out, "add", (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


@_register
def sub(a, b):
    a, b = _pair(a, b)
    out = a.data - b.data
    return make_op(out, "sub", (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


@_register
def mul(a, b):
    a, b = _pair(a, b)
    out = a.data * b.data
    return make_op(out, "mul", (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


@_register
def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data
    return make_op(out, "div", (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


@_register
def neg(a):
    a = astensor(a)
    return make_op(-a.data, "neg", (a,), lambda g: (-g,))


@_register
def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_op(out, "matmul", (a, b), vjp)


# -- reductions / shape -------------------------------------------------


@_register
def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors array API naming
    x = astensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            for a in builtins.sorted(axes):
                g = np.expand_dims(g, a)
        return (np.broadcast_to(g, x.shape),)

    return make_op(out, "sum", (x,), vjp)


@_register
def mean(x, axis=None, keepdims=False):
    x = astensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            for a in builtins.sorted(axes):
                g = np.expand_dims(g, a)
        return (np.broadcast_to(g / count, x.shape),)

    return make_op(out, "mean", (x,), vjp)


@_register
def reshape(x, shape):
    x = astensor(x)
    out = x.data.reshape(shape)
    return make_op(out, "reshape", (x,), lambda g: (g.reshape(x.shape),))


@_register
def transpose(x):
    """Swap the last two axes."""
    x = astensor(x)
    if x.ndim < 2:
        raise ShapeError(f"transpose needs >=2-d input, got {x.shape}")
    out = np.swapaxes(x.data, -1, -2)
    return make_op(out, "transpose", (x,), lambda g: (np.swapaxes(g, -1, -2),))


@_register
def broadcast_to(x, shape):
    x = astensor(x)
    out = np.broadcast_to(x.data, shape)
    return make_op(out, "broadcast_to", (x,), lambda g: (_unbroadcast(g, x.shape),))


@_register
def concat(tensors, axis=0):
    tensors = tuple(astensor(t) for t in tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_op(out, "concat", tensors, vjp)


# -- indexing -----------------------------------------------------------


@_register
def gather(x, index):
    """Select rows of x (axis 0) by an integer index vector."""
    x = astensor(x)
    index = np.asarray(index)
    if index.ndim != 1:
        raise ShapeError(f"gather index must be 1-d, got shape {index.shape}")
    out = x.data[index]

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return make_op(out, "gather", (x,), vjp)


@_register
def scatter_add(src, index, size: int):
    """Accumulate rows of src into a fresh (size, ...) array at index."""
    src = astensor(src)
    index = np.asarray(index)
    if index.ndim != 1 or index.shape[0] != src.shape[0]:
        raise ShapeError(f"scatter_add index shape {index.shape} != src rows {src.shape}")
    out = np.zeros((size,) + src.shape[1:], dtype=src.data.dtype)
    np.add.at(out, index, src.data)
    return make_op(out, "scatter_add", (src,), lambda g: (g[index],))


@_register
def col(x, j: int):
    """Extract column j along the last axis, dropping that axis."""
    x = astensor(x)
    out = x.data[..., j]

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[..., j] = g
        return (gx,)

    return make_op(out, "col", (x,), vjp)


# -- nonlinearities -----------------------------------------------------


@_register
def relu(x):
    x = astensor(x)
    out = np.maximum(x.data, 0)
    return make_op(out, "relu", (x,), lambda g: (g * (x.data > 0),))


@_register
def tanh(x):
    x = astensor(x)
    out = np.tanh(x.data)
    return make_op(out, "tanh", (x,), lambda g: (g * (1.0 - out * out),))


@_register
def sigmoid(x):
    x = astensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_op(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


@_register
def exp(x):
    x = astensor(x)
    out = np.exp(x.data)
    return make_op(out, "exp", (x,), lambda g: (g * out,))


@_register
def log(x):
    x = astensor(x)
    out = np.log(x.data)
    return make_op(out, "log", (x,), lambda g: (g / x.data,))


@_register
def sqrt(x):
    x = astensor(x)
    out = np.sqrt(x.data)
    return make_op(out, "sqrt", (x,), lambda g: (g / (2.0 * out),))


@_register
def softmax(x):
    """Softmax along the last axis."""
    x = astensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return make_op(out, "softmax", (x,), vjp)


@_register
def layer_norm(x, gain, bias, eps: float = 1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x = astensor(x)
    gain = astensor(gain, like=x)
    bias = astensor(bias, like=x)
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dgain = _unbroadcast((g * xhat).sum(axis=lead), gain.shape)
        dbias = _unbroadcast(g.sum(axis=lead), bias.shape)
        u = g * gain.data
        du = u.mean(axis=-1, keepdims=True)
        dux = (u * xhat).mean(axis=-1, keepdims=True)
        dx = (u - du - xhat * dux) * inv
        return dx, dgain, dbias

    return make_op(out, "layer_norm", (x, gain, bias), vjp)


@_register
def clamp(x, lo: float, hi: float):
    """Clip to [lo, hi]; gradient passes through at the boundary."""
    x = astensor(x)
    out = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)
    return make_op(out, "clamp", (x,), lambda g: (g * mask,))


@_register
def cross(a, b):
    """3-vector cross product along the last axis."""
    a, b = _pair(a, b)
    if a.shape[-1] != 3 or b.shape[-1] != 3:
        raise ShapeError(f"cross needs trailing dim 3, got {a.shape} x {b.shape}")
    out = np.cross(a.data, b.data)

    def vjp(g):
        return (_unbroadcast(np.cross(b.data, g), a.shape),
                _unbroadcast(np.cross(g, a.data), b.shape))

    return make_op(out, "cross", (a, b), vjp)
