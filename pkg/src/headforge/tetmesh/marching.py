"""Differentiable marching tetrahedra.

Topology (which tets emit which triangles) is decided in plain numpy from
the SDF signs; crossing-vertex positions are built from tape ops so
gradients flow to both the SDF values and the (deformed) grid vertices.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, astensor, ops
from .mesh import SurfaceMesh

# local edge e -> tet vertex pair
EDGE_VERTS = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], dtype=np.int64)

# case index = sum over tet vertices of (sdf < 0) << i; 16 sign patterns in
# two symmetry classes (one vertex vs. three, two vs. two)
TRI_TABLE = [
    [],
    [1, 0, 2],
    [4, 0, 3],
    [1, 4, 2, 1, 3, 4],
    [3, 1, 5],
    [2, 3, 0, 2, 5, 3],
    [1, 4, 0, 1, 5, 4],
    [4, 2, 5],
    [4, 5, 2],
    [4, 1, 0, 4, 5, 1],
    [3, 2, 0, 3, 5, 2],
    [1, 3, 5],
    [4, 1, 2, 4, 3, 1],
    [3, 0, 4],
    [2, 0, 1],
    [],
]

ZERO_PERTURBATION = 1e-8
DEGENERATE_EDGE_EPS = 1e-12


def marching_tets(vertices, sdf, tets: np.ndarray) -> SurfaceMesh:
    """Extract the sdf zero level set as a triangle mesh.

    vertices: (N, 3) Tensor or array of (possibly deformed) grid positions.
    sdf: (N,) Tensor or array, negative inside. Exact zeros are perturbed
    by +1e-8 so every vertex has a definite sign.
    tets: (T, 4) positively oriented vertex indices.

    Faces wind outward (positive enclosed volume for closed surfaces).
    """
    vertices = astensor(vertices)
    sdf = astensor(sdf)
    svals = sdf.numpy()
    zero_mask = svals == 0.0
    if zero_mask.any():
        sdf = sdf + Tensor((zero_mask * ZERO_PERTURBATION).astype(svals.dtype))
        svals = sdf.numpy()

    inside = svals < 0
    bits = inside[tets].astype(np.int64)
    case = bits[:, 0] | (bits[:, 1] << 1) | (bits[:, 2] << 2) | (bits[:, 3] << 3)
    keep = (case > 0) & (case < 15)
    live_tets = tets[keep]
    live_case = case[keep]
    if live_tets.shape[0] == 0:
        empty_v = Tensor(np.zeros((0, 3), dtype=vertices.dtype))
        return SurfaceMesh(empty_v, np.zeros((0, 3), dtype=np.int64))

    # unique crossing edges over all live tets
    edges = live_tets[:, EDGE_VERTS]                       # (L, 6, 2)
    edges = np.sort(edges.reshape(-1, 2), axis=1)
    keys = edges[:, 0] * (svals.shape[0] + 1) + edges[:, 1]
    uniq_keys, inv = np.unique(keys, return_inverse=True)
    edge_of_tet = inv.reshape(-1, 6)                       # local edge -> unique edge row
    uniq = np.stack([uniq_keys // (svals.shape[0] + 1),
                     uniq_keys % (svals.shape[0] + 1)], axis=1)
    crossing = inside[uniq[:, 0]] != inside[uniq[:, 1]]
    new_index = np.cumsum(crossing) - 1                   # unique edge row -> output vertex
    a, b = uniq[crossing, 0], uniq[crossing, 1]

    # crossing vertex: va + (0 - sa)/(sb - sa) * (vb - va), differentiable in
    # both the sdf values and the endpoint positions
    sa = ops.gather(sdf, a)
    sb = ops.gather(sdf, b)
    denom = sa - sb
    degenerate = np.abs(denom.numpy()) < DEGENERATE_EDGE_EPS
    degenerate_count = int(degenerate.sum())
    if degenerate_count:
        # measure-zero guard: park the vertex at the midpoint of such edges
        denom = denom + Tensor(degenerate.astype(svals.dtype))
        w = sa / denom
        half = degenerate.astype(svals.dtype)
        w = w * Tensor(1.0 - half) + Tensor(0.5 * half)
    else:
        w = sa / denom
    va = ops.gather(vertices, a)
    vb = ops.gather(vertices, b)
    out_verts = va + ops.reshape(w, (-1, 1)) * (vb - va)

    # assemble faces case by case (deterministic order)
    blocks = []
    for c in range(1, 15):
        rows = np.flatnonzero(live_case == c)
        if rows.size == 0:
            continue
        entry = TRI_TABLE[c]
        for t in range(len(entry) // 3):
            local = entry[3 * t: 3 * t + 3]
            blocks.append(new_index[edge_of_tet[rows][:, local]])
    faces = np.concatenate(blocks, axis=0)
    # the case table winds toward the negative side; swap to outward (positive
    # enclosed volume with the negative-inside convention)
    faces = np.ascontiguousarray(faces[:, [0, 2, 1]])

    return SurfaceMesh(out_verts, faces, degenerate_edges=degenerate_count)
