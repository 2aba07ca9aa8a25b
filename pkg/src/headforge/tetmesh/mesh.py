"""Triangle surface mesh with differentiable vertex quantities."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, astensor, ops


class SurfaceMesh:
    """Vertices (V, 3) as a Tensor (gradients flow), faces (F, 3) as ints."""

    def __init__(self, vertices, faces: np.ndarray, degenerate_edges: int = 0):
        self.vertices = astensor(vertices)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.degenerate_edges = degenerate_edges
        self.skipped_normals = 0

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def face_corner_positions(self):
        f = self.faces
        return (ops.gather(self.vertices, f[:, 0]),
                ops.gather(self.vertices, f[:, 1]),
                ops.gather(self.vertices, f[:, 2]))

    def face_normals(self) -> Tensor:
        """Unnormalized face normals (length = 2x area), outward for CCW faces."""
        v0, v1, v2 = self.face_corner_positions()
        return ops.cross(v1 - v0, v2 - v0)

    def vertex_normals(self) -> Tensor:
        """Area-weighted unit vertex normals, differentiable in positions.

        Vertices whose incident faces are all slivers (accumulated normal below
        1e-8) get a constant +z fallback and are counted in skipped_normals.
        """
        n = self.num_vertices
        fn = self.face_normals()
        acc = (ops.scatter_add(fn, self.faces[:, 0], n)
               + ops.scatter_add(fn, self.faces[:, 1], n)
               + ops.scatter_add(fn, self.faces[:, 2], n))
        raw = np.linalg.norm(acc.numpy(), axis=1, keepdims=True)
        bad = raw < 1e-8
        self.skipped_normals = int(bad.sum())
        # clamp before sqrt so sliver vertices get a zero gradient, not 0/0
        norm = ops.sqrt(ops.clamp(ops.sum(acc * acc, axis=1, keepdims=True),
                                  1e-24, np.inf))
        unit = acc / norm
        if not bad.any():
            return unit
        keep = Tensor((~bad).astype(unit.dtype))
        fallback = np.where(bad, np.array([0.0, 0.0, 1.0], unit.dtype), 0.0)
        return unit * keep + Tensor(fallback.astype(unit.dtype))

    def signed_volume(self) -> float:
        """Divergence-theorem volume; positive for closed outward meshes."""
        v = self.vertices.numpy()
        p0, p1, p2 = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        return float(np.einsum("ij,ij->i", np.cross(p0, p1), p2).sum() / 6.0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges (E, 2)."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
        return np.unique(np.sort(e, axis=1), axis=0)


def is_watertight(mesh: SurfaceMesh) -> bool:
    """Closed 2-manifold check: every undirected edge is shared by exactly two
    faces, once in each direction (consistent orientation)."""
    f = mesh.faces
    if f.shape[0] == 0:
        return False
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    n = int(directed.max()) + 1
    keys = directed[:, 0] * n + directed[:, 1]
    if np.unique(keys).size != keys.size:
        return False  # a directed edge repeats: inconsistent or non-manifold
    rev = directed[:, 1] * n + directed[:, 0]
    return bool(np.isin(keys, rev).all())


def laplacian_energy(mesh: SurfaceMesh) -> Tensor:
    """Sum over vertices of squared distance to the neighbor centroid.

    Uniform-weight graph Laplacian over the mesh edges; differentiable in
    vertex positions. Isolated vertices contribute zero.
    """
    e = mesh.edges()
    n = mesh.num_vertices
    deg = np.bincount(e.reshape(-1), minlength=n).astype(mesh.vertices.dtype)
    nbr_sum = (ops.scatter_add(ops.gather(mesh.vertices, e[:, 1]), e[:, 0], n)
               + ops.scatter_add(ops.gather(mesh.vertices, e[:, 0]), e[:, 1], n))
    safe_deg = np.maximum(deg, 1.0)[:, None]
    diff = mesh.vertices - nbr_sum / Tensor(safe_deg)
    mask = Tensor((deg > 0).astype(mesh.vertices.dtype)[:, None])
    return ops.sum(diff * diff * mask)
