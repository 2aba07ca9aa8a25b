"""Expression-conditioned PBR texture field."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from .hashgrid import HashGridEncoder
from .networks import TokenTransformer


class TextureField:
    """Maps surface points + expression code to (albedo, roughness, metallic).

    Albedo channels are sigmoid-bounded; roughness and metallic are clamped
    offsets around (1.0, 0.0). With the zero-initialized head, albedo starts
    at exactly 0.5 and roughness/metallic at exactly (1.0, 0.0), the values
    the shading stage holds fixed while only albedo trains.
    """

    def __init__(self, rng: np.random.Generator, code_dim: int = 32, levels: int = 8,
                 min_res: int = 8, max_res: int = 128, table_size: int = 2 ** 14,
                 features: int = 2, d_model: int = 32, blocks: int = 3,
                 chunk: int = 1024, dtype=np.float32):
        self.encoder = HashGridEncoder(rng, levels=levels, min_res=min_res,
                                       max_res=max_res, table_size=table_size,
                                       features=features, dtype=dtype)
        self.net = TokenTransformer(self.encoder.out_dim + code_dim, d_model, blocks,
                                    5, rng, chunk=chunk, zero_head=True, dtype=dtype)
        self.code_dim = code_dim

    def forward(self, points: np.ndarray, code: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """points (P, 3) -> albedo (P, 3), roughness (P,), metallic (P,)."""
        pts = points if isinstance(points, Tensor) else Tensor(np.ascontiguousarray(points))
        feats = self.encoder(pts)
        code_rows = ops.broadcast_to(ops.reshape(code, (1, self.code_dim)),
                                     (pts.shape[0], self.code_dim))
        out = self.net(ops.concat([feats, code_rows], axis=1))
        albedo = ops.concat(
            [ops.reshape(ops.col(out, j).sigmoid(), (-1, 1)) for j in (0, 1, 2)],
            axis=1)
        rough = ops.clamp(ops.col(out, 3) + 1.0, 0.0, 1.0)
        metal = ops.clamp(ops.col(out, 4), 0.0, 1.0)
        return albedo, rough, metal

    def parameters(self, prefix: str = "texture"):
        return self.encoder.parameters(f"{prefix}.hash") + self.net.parameters(f"{prefix}.net")
