"""Template signed-distance field: a small hash-grid MLP fit by regression."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, no_grad, ops
from .hashgrid import HashGridEncoder
from .networks import Linear


class TemplateField:
    """Scalar SDF baseline that expression-conditioned residuals deform."""

    def __init__(self, rng: np.random.Generator, levels: int = 6, min_res: int = 4,
                 max_res: int = 64, table_size: int = 2 ** 12, features: int = 2,
                 hidden: int = 32, dtype=np.float32):
        self.encoder = HashGridEncoder(rng, levels=levels, min_res=min_res,
                                       max_res=max_res, table_size=table_size,
                                       features=features, dtype=dtype)
        self.l1 = Linear(self.encoder.out_dim + 3, hidden, rng, dtype=dtype)
        self.l2 = Linear(hidden, hidden, rng, dtype=dtype)
        self.l3 = Linear(hidden, 1, rng, dtype=dtype)
        self.fitted = False

    def forward(self, points) -> Tensor:
        """Tracked forward: (P, 3) points -> (P,) sdf values."""
        points = points if isinstance(points, Tensor) else Tensor(points)
        feats = ops.concat([self.encoder(points), points], axis=1)
        h = self.l1(feats).relu()
        h = self.l2(h).relu()
        return ops.col(self.l3(h), 0)

    def values(self, points: np.ndarray) -> np.ndarray:
        """Untracked evaluation for frozen use."""
        with no_grad():
            return self.forward(points).numpy()

    def parameters(self, prefix: str = "template"):
        out = self.encoder.parameters(f"{prefix}.hash")
        for name, lin in (("l1", self.l1), ("l2", self.l2), ("l3", self.l3)):
            out.extend(lin.parameters(f"{prefix}.{name}"))
        return out
