"""Learned per-expression latent codes."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor

ALLOWED_SIZES = (1, 3, 6, 13)


class ExpressionCodebook:
    """K independent latent codes, one per expression.

    Codes are separate parameters (not rows of one matrix) so a training step
    that selects code i cannot touch code j, even through optimizer state.
    """

    def __init__(self, count: int, dim: int = 32, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        if count not in ALLOWED_SIZES:
            raise ValueError(f"codebook size must be one of {ALLOWED_SIZES}, got {count}")
        rng = rng or np.random.default_rng(0)
        self.count = count
        self.dim = dim
        self.codes = [
            Tensor((rng.normal(0.0, 0.1, size=dim)).astype(dtype), requires_grad=True)
            for _ in range(count)
        ]

    def __getitem__(self, i: int) -> Tensor:
        return self.codes[i]

    def parameters(self, prefix: str = "codes"):
        return [(f"{prefix}.{i}", c) for i, c in enumerate(self.codes)]
