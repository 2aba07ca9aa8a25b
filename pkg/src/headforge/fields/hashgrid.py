"""Multiresolution hash-grid positional encoding."""
from __future__ import annotations

import math

import numpy as np

from ..autodiff import Tensor, astensor, ops

HASH_PRIMES = (1, 2654435761, 805459861)


def spatial_hash(cells: np.ndarray, table_size: int) -> np.ndarray:
    """XOR-fold integer lattice coordinates into a table index.

    cells: (..., 3) non-negative integers. Products wrap mod 2**64, which is
    exact for any realistic grid resolution.
    """
    c = cells.astype(np.uint64)
    h = (c[..., 0] * np.uint64(HASH_PRIMES[0])
         ^ c[..., 1] * np.uint64(HASH_PRIMES[1])
         ^ c[..., 2] * np.uint64(HASH_PRIMES[2]))
    return (h % np.uint64(table_size)).astype(np.int64)


def level_resolutions(levels: int, min_res: int, max_res: int) -> list[int]:
    """Geometric progression of lattice resolutions from min_res to max_res."""
    if levels == 1:
        return [min_res]
    b = math.exp(math.log(max_res / min_res) / (levels - 1))
    out = []
    for l in range(levels):
        r = int(round(min_res * b ** l))
        if out and r <= out[-1]:
            r = out[-1] + 1
        out.append(r)
    out[0], out[-1] = min_res, max_res
    return out

# corner offsets of a lattice cell, binary order
_CORNERS = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.int64)


class HashGridEncoder:
    """Learnable multiresolution feature grid over the [-1, 1]^3 box.

    Each level hashes the 8 cell corners around a query point into its own
    feature table and blends them trilinearly. Output features are
    differentiable w.r.t. both the tables and the query positions.
    """

    def __init__(self, rng: np.random.Generator, levels: int = 8, min_res: int = 8,
                 max_res: int = 128, table_size: int = 2 ** 14, features: int = 2,
                 dtype=np.float32):
        self.levels = levels
        self.table_size = table_size
        self.features = features
        self.resolutions = level_resolutions(levels, min_res, max_res)
        self.tables = [
            Tensor(rng.uniform(-1e-4, 1e-4, size=(table_size, features)).astype(dtype),
                   requires_grad=True)
            for _ in range(levels)
        ]
        self.out_dim = levels * features
        self.clamped_queries = 0

    def parameters(self, prefix: str = "hash"):
        return [(f"{prefix}.table{l}", t) for l, t in enumerate(self.tables)]

    def __call__(self, points) -> Tensor:
        """Encode (P, 3) points in [-1, 1]^3 to (P, levels*features)."""
        points = astensor(points)
        raw = points.data
        outside = int((np.abs(raw) > 1.0).any(axis=-1).sum())
        if outside:
            self.clamped_queries += outside
        p = ops.clamp(points, -1.0, 1.0)
        u = (p + 1.0) * 0.5

        per_level = []
        for l, res in enumerate(self.resolutions):
            scaled = u * float(res)
            cell = np.floor(scaled.data).astype(np.int64)
            frac = scaled - Tensor(cell.astype(scaled.dtype))
            fx, fy, fz = ops.col(frac, 0), ops.col(frac, 1), ops.col(frac, 2)
            wx = (1.0 - fx, fx)
            wy = (1.0 - fy, fy)
            wz = (1.0 - fz, fz)

            level_feat = None
            for corner in _CORNERS:
                idx = spatial_hash(cell + corner, self.table_size)
                w = wx[corner[0]] * wy[corner[1]] * wz[corner[2]]
                contrib = ops.gather(self.tables[l], idx) * ops.reshape(w, (-1, 1))
                level_feat = contrib if level_feat is None else level_feat + contrib
            per_level.append(level_feat)

        return ops.concat(per_level, axis=1)
