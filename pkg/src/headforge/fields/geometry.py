"""Expression-conditioned geometry field: SDF residual + vertex deformation."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from .codebook import ExpressionCodebook
from .hashgrid import HashGridEncoder
from .networks import TokenTransformer


class GeometryField:
    """Predicts per-vertex (sdf, deformation) on top of a frozen template SDF.

    sdf(v, e) = template(v) + residual(v, e); the residual head is
    zero-initialized so the field starts exactly at the template. Vertex
    deformations are tanh-bounded to deform_limit so tets cannot invert,
    and with residual_limit > 0 the SDF residual is tanh-bounded too,
    which keeps one noisy step from pushing the whole level set out of
    reach of later corrections.

    The network only runs on vertices inside a band around the template's
    zero set (band=None evaluates everywhere); outside it residual and
    deformation are zero and the template alone decides signs.
    """

    def __init__(self, template, rng: np.random.Generator, code_dim: int = 32,
                 levels: int = 8, min_res: int = 8, max_res: int = 128,
                 table_size: int = 2 ** 14, features: int = 2, d_model: int = 32,
                 blocks: int = 4, chunk: int = 1024, deform_limit: float = 0.0140625,
                 residual_limit: float = 0.0, dtype=np.float32):
        self.template = template
        self.encoder = HashGridEncoder(rng, levels=levels, min_res=min_res,
                                       max_res=max_res, table_size=table_size,
                                       features=features, dtype=dtype)
        token_dim = self.encoder.out_dim + code_dim + 3
        self.net = TokenTransformer(token_dim, d_model, blocks, 4, rng,
                                    chunk=chunk, zero_head=True, dtype=dtype)
        self.deform_limit = float(deform_limit)
        self.residual_limit = float(residual_limit)
        self.code_dim = code_dim

    def forward(self, vertices: np.ndarray, code: Tensor,
                template_values: np.ndarray | None = None,
                band: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """vertices (N, 3), code (code_dim,) -> sdf (N,), offsets (N, 3)."""
        n = vertices.shape[0]
        if template_values is None:
            template_values = self.template.values(vertices)
        active = np.arange(n) if band is None else np.flatnonzero(band)
        pts = Tensor(np.ascontiguousarray(vertices[active]))

        feats = self.encoder(pts)
        code_rows = ops.broadcast_to(ops.reshape(code, (1, self.code_dim)),
                                     (len(active), self.code_dim))
        tokens = ops.concat([feats, code_rows, pts], axis=1)
        out = self.net(tokens)

        residual = ops.col(out, 0)
        if self.residual_limit > 0:
            residual = residual.tanh() * self.residual_limit
        deform = ops.concat([ops.reshape(ops.col(out, j), (-1, 1)) for j in (1, 2, 3)],
                            axis=1)
        sdf = Tensor(template_values) + ops.scatter_add(residual, active, n)
        offsets = ops.scatter_add(deform.tanh() * self.deform_limit, active, n)
        return sdf, offsets

    def parameters(self, prefix: str = "geometry"):
        return self.encoder.parameters(f"{prefix}.hash") + self.net.parameters(f"{prefix}.net")
