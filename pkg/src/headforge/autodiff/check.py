"""Finite-difference gradient verification."""
from __future__ import annotations

import numpy as np

from .engine import ShapeError, Tensor, backward


class GradCheckError(ValueError):
    """Raised when probe evaluations are non-finite."""

    def __init__(self, coords):
        self.coords = coords
        super().__init__(f"non-finite finite-difference probes at flat coordinates {coords}")


def grad_check(f, x, h: float = 1e-4, coords=None) -> float:
    """Compare reverse-mode gradients of scalar f against central differences.

    Runs in float64 regardless of the input dtype. Returns the maximum
    relative error max |analytic - numeric| / max(1, |analytic|).
    coords optionally restricts probing to those flat indices.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0.copy(), requires_grad=True)
    y = f(leaf)
    if y.size != 1:
        raise ShapeError(f"grad_check needs a scalar objective, got shape {y.shape}")
    backward(y)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x0)

    flat = x0.reshape(-1)
    probe = range(flat.size) if coords is None else list(coords)
    numeric = np.full_like(flat, np.nan)
    bad = []
    for i in probe:
        xp = flat.copy()
        xp[i] += h
        fp = f(Tensor(xp.reshape(x0.shape), dtype=np.float64)).item()
        xm = flat.copy()
        xm[i] -= h
        fm = f(Tensor(xm.reshape(x0.shape), dtype=np.float64)).item()
        if not (np.isfinite(fp) and np.isfinite(fm)):
            bad.append(i)
            numeric[i] = np.nan
        else:
            numeric[i] = (fp - fm) / (2.0 * h)
    if bad:
        raise GradCheckError(bad)

    idx = np.fromiter(probe, dtype=np.int64)
    if idx.size == 0:
        return 0.0
    err = np.abs(analytic.reshape(-1)[idx] - numeric[idx])
    scale = np.maximum(1.0, np.abs(analytic.reshape(-1)[idx]))
    return float((err / scale).max())
