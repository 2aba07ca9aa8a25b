"""Tape-based reverse-mode autodiff on numpy arrays."""
from .check import GradCheckError, grad_check
from .engine import (
    Node,
    OpError,
    ShapeError,
    Tensor,
    astensor,
    backward,
    grad_enabled,
    graph_nodes,
    no_grad,
    topo_order,
)
from .ops import apply, op_kinds

__all__ = [
    "Tensor", "Node", "backward", "apply", "op_kinds", "grad_check",
    "astensor", "no_grad", "grad_enabled", "topo_order", "graph_nodes",
    "ShapeError", "OpError", "GradCheckError",
]
