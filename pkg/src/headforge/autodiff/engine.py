"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps an ndarray; every operation on tracked tensors appends a
node to an implicit tape (the node graph hanging off each output).
backward() walks that graph once in reverse topological order and
accumulates vector-Jacobian products into leaf .grad arrays.

Production paths run in float32. Passing float64 data switches the whole
downstream graph to 64-bit, which is what the finite-difference oracles use.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class OpError(ValueError):
    """Raised for unknown op kinds or invalid op arguments."""


_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording inside its body."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Node:
    """Operation record: kind tag, parent tensors, and their VJP."""

    __slots__ = ("kind", "parents", "vjp")

    def __init__(self, kind, parents, vjp):
        self.kind = kind
        self.parents = parents
        self.vjp = vjp


class Tensor:
    """Dense real array with optional gradient tracking.

    data is always float32 or float64. grad, when populated by backward(),
    is an ndarray of the same shape and dtype. node is None for leaves.
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap raw array data, not another Tensor")
        keep = isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64)
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not keep:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None

    # -- introspection -------------------------------------------------
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

    def __repr__(self):
        tag = "leaf" if self.node is None else self.node.kind
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, {tag})"

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    # -- operator sugar (implementations live in ops.py) ---------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def relu(self):
        from . import ops
        return ops.relu(self)

    def tanh(self):
        from . import ops
        return ops.tanh(self)

    def sigmoid(self):
        from . import ops
        return ops.sigmoid(self)

    def exp(self):
        from . import ops
        return ops.exp(self)

    def log(self):
        from . import ops
        return ops.log(self)

    def sqrt(self):
        from . import ops
        return ops.sqrt(self)

    def clamp(self, lo, hi):
        from . import ops
        return ops.clamp(self, lo, hi)

    def backward(self, seed=None, leaves=None):
        backward(self, seed=seed, leaves=leaves)


def astensor(value, like: Tensor | None = None) -> Tensor:
    """Coerce scalars/arrays to a constant Tensor (dtype borrowed from like)."""
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(value, requires_grad=False, dtype=dtype)


def make_op(out_data: np.ndarray, kind: str, parents, vjp) -> Tensor:
    """Build the op output tensor and attach a tape node if tracking is on."""
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(kind, tuple(parents), vjp)
    else:
        out.requires_grad = False
        out.node = None
    return out


def topo_order(root: Tensor) -> list[Tensor]:
    """Tensors with nodes reachable from root, parents before children."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if t.node is None or id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t.node.parents:
            stack.append((p, False))
    return order


def graph_nodes(root: Tensor) -> list[tuple[str, tuple[int, ...]]]:
    """(kind, parent ids) records in topological order, for inspection."""
    return [(t.node.kind, tuple(id(p) for p in t.node.parents)) for t in topo_order(root)]


def backward(root: Tensor, seed=None, leaves=None):
    """Accumulate d(root)/d(leaf) into leaf.grad for every reachable leaf.

    seed is the cotangent of root: required (and shape-checked) when root is
    not a scalar, defaults to 1 otherwise. Repeated calls accumulate (+=).
    leaves, when given, are zero-filled if backward never reached them.
    """
    if seed is None:
        if root.size != 1:
            raise ShapeError(f"non-scalar root of shape {root.shape} needs an explicit seed")
        seed = np.ones_like(root.data)
    else:
        seed = np.asarray(seed, dtype=root.data.dtype)
        if seed.shape != root.data.shape:
            if seed.size == 1:
                seed = np.full_like(root.data, float(seed.reshape(())))
            else:
                raise ShapeError(f"seed shape {seed.shape} != root shape {root.data.shape}")

    def _sink(leaf: Tensor, g: np.ndarray):
        if leaf.requires_grad:
            leaf.grad = np.array(g, dtype=leaf.data.dtype, copy=True) if leaf.grad is None \
                else leaf.grad + g

    if root.node is None:
        _sink(root, seed)
    else:
        order = topo_order(root)
        grads: dict[int, np.ndarray] = {id(root): seed}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            for parent, pg in zip(t.node.parents, t.node.vjp(g)):
                if pg is None:
                    continue
                if parent.node is None:
                    _sink(parent, pg)
                else:
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else prev + pg

    if leaves is not None:
        for leaf in leaves:
            if leaf.requires_grad and leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
