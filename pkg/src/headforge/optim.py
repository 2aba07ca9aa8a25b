"""Adam optimizer over named Tensor parameters."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    """Adam with per-parameter step counters.

    Bias correction advances only for parameters actually stepped, so a
    parameter that sits out an iteration (e.g. an unselected expression code)
    is left bit-identical, moments included.
    """

    def __init__(self, params: list[tuple[str, Tensor]], lr: float,
                 beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.names = [n for n, _ in params]
        self.tensors = [t for _, t in params]
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(t.data) for t in self.tensors]
        self.v = [np.zeros_like(t.data) for t in self.tensors]
        self.steps = np.zeros(len(self.tensors), dtype=np.int64)

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None

    def clip_global_norm(self, max_norm: float) -> float:
        """Scale all present gradients so their joint L2 norm is <= max_norm."""
        total = 0.0
        for t in self.tensors:
            if t.grad is not None:
                total += float((t.grad.astype(np.float64) ** 2).sum())
        norm = float(np.sqrt(total))
        if norm > max_norm > 0:
            scale = max_norm / norm
            for t in self.tensors:
                if t.grad is not None:
                    t.grad = t.grad * np.asarray(scale, dtype=t.grad.dtype)
        return norm

    def step(self):
        """Update every parameter that has a gradient; leave the rest untouched."""
        for i, t in enumerate(self.tensors):
            g = t.grad
            if g is None:
                continue
            self.steps[i] += 1
            k = self.steps[i]
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / (1.0 - self.beta1 ** k)
            vhat = self.v[i] / (1.0 - self.beta2 ** k)
            t.data = t.data - (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(t.data.dtype)

    def state_dict(self) -> dict:
        arrays = {}
        for i, name in enumerate(self.names):
            arrays[f"m.{name}"] = self.m[i]
            arrays[f"v.{name}"] = self.v[i]
        arrays["steps"] = self.steps
        return arrays

    def load_state_dict(self, arrays: dict):
        for i, name in enumerate(self.names):
            self.m[i] = np.array(arrays[f"m.{name}"])
            self.v[i] = np.array(arrays[f"v.{name}"])
        self.steps = np.array(arrays["steps"], dtype=np.int64)
