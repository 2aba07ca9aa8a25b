"""Analytic SDF targets and reference meshes."""
from __future__ import annotations

import numpy as np


def sphere_sdf(radius: float = 0.5, center=(0.0, 0.0, 0.0)):
    center = np.asarray(center, dtype=np.float64)

    def sdf(points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - center, axis=-1) - radius

    return sdf


def ellipsoid_sdf(axes=(0.5, 0.6, 0.7)):
    """Approximate ellipsoid SDF with an exact zero set."""
    axes = np.asarray(axes, dtype=np.float64)

    def sdf(points: np.ndarray) -> np.ndarray:
        q = points / axes
        k0 = np.linalg.norm(q, axis=-1)
        k1 = np.linalg.norm(points / (axes * axes), axis=-1)
        return np.where(k1 > 0, k0 * (k0 - 1.0) / np.maximum(k1, 1e-12), -axes.min())

    return sdf


def icosphere(subdivisions: int = 1, radius: float = 0.5):
    """Subdivided icosahedron projected to a sphere: (verts, faces)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)

    for _ in range(subdivisions):
        verts_list = list(verts)
        midpoint = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                verts_list.append((verts_list[i] + verts_list[j]) / 2.0)
                midpoint[key] = len(verts_list) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)

    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True) * radius
    return verts.astype(np.float32), faces


def flat_shaded(verts: np.ndarray, faces: np.ndarray):
    """Duplicate vertices per face so interpolated attributes are constant
    within each face (faceted shading)."""
    flat_verts = verts[faces.reshape(-1)]
    flat_faces = np.arange(faces.size, dtype=np.int64).reshape(-1, 3)
    return flat_verts, flat_faces
