"""Regular tetrahedral grid over the [-1, 1]^3 box."""
from __future__ import annotations

import numpy as np

# 6-tet (Kuhn) split of the unit cube: one tet per permutation of the axes,
# all sharing the main diagonal. Coordinate permutations map the complex to
# itself, and neighboring cubes tile compatibly.
_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


class TetGrid:
    """Vertices on a (res+1)^3 lattice plus a 6-per-cube tet decomposition."""

    def __init__(self, res: int):
        self.res = res
        self.cell_size = 2.0 / res
        axis = np.linspace(-1.0, 1.0, res + 1)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        self.vertices = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3).astype(np.float32)
        self.tets = _build_tets(res)

    @property
    def num_vertices(self) -> int:
        return (self.res + 1) ** 3


def _build_tets(res: int) -> np.ndarray:
    n = res + 1
    cx, cy, cz = np.meshgrid(np.arange(res), np.arange(res), np.arange(res), indexing="ij")
    base = np.stack([cx, cy, cz], axis=-1).reshape(-1, 3)  # (res^3, 3)

    def vid(corner):
        return (corner[..., 0] * n + corner[..., 1]) * n + corner[..., 2]

    tets = []
    ones = np.ones(3, dtype=np.int64)
    for a, b, c in _PERMS:
        e = np.zeros((3, 3), dtype=np.int64)
        e[0, a] = 1
        e[1, b] = 1
        e[2, c] = 1
        v0 = base
        v1 = base + e[0]
        v2 = base + e[0] + e[1]
        v3 = base + ones
        tets.append(np.stack([vid(v0), vid(v1), vid(v2), vid(v3)], axis=-1))
    tets = np.concatenate(tets, axis=0)

    # normalize to positive signed volume so the marching case table sees a
    # consistent orientation in every tet
    verts = _lattice_positions(res)
    p = verts[tets]
    vol = np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]),
                    p[:, 3] - p[:, 0])
    flip = vol < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
    return np.ascontiguousarray(tets)


def _lattice_positions(res: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, res + 1)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
