"""Template SDF fitting by regression on sampled target values."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..optim import Adam
from .mesh import SurfaceMesh


class TemplateFitError(RuntimeError):
    """Fit did not reach the configured MSE threshold."""

    def __init__(self, achieved: float, threshold: float):
        self.achieved = achieved
        self.threshold = threshold
        super().__init__(f"template fit MSE {achieved:.3e} above threshold {threshold:.3e}")


class WindingAmbiguityError(ValueError):
    """Target mesh inside/outside classification is ambiguous (not watertight?)."""


def winding_numbers(points: np.ndarray, verts: np.ndarray, faces: np.ndarray,
                    chunk: int = 256) -> np.ndarray:
    """Generalized winding number of each point w.r.t. the mesh (~1 inside)."""
    tri = verts[faces]  # (F, 3, 3)
    out = np.empty(points.shape[0], dtype=np.float64)
    for s in range(0, points.shape[0], chunk):
        p = points[s: s + chunk]
        a = tri[None, :, 0] - p[:, None]
        b = tri[None, :, 1] - p[:, None]
        c = tri[None, :, 2] - p[:, None]
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        det = np.einsum("pfi,pfi->pf", a, np.cross(b, c))
        denom = (la * lb * lc + np.einsum("pfi,pfi->pf", a, b) * lc
                 + np.einsum("pfi,pfi->pf", b, c) * la
                 + np.einsum("pfi,pfi->pf", c, a) * lb)
        out[s: s + chunk] = np.arctan2(det, denom).sum(axis=1) / (2.0 * np.pi)
    return out


def point_mesh_distance(points: np.ndarray, verts: np.ndarray, faces: np.ndarray,
                        chunk: int = 128) -> np.ndarray:
    """Unsigned distance from each point to the closest triangle.

    Closest point is either the projection onto a face plane (when that
    projection lands inside the face) or on one of its edges, so the minimum
    over {interior projection, three edges} is exact.
    """
    v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    n = np.cross(v1 - v0, v2 - v0)
    nn = np.einsum("fi,fi->f", n, n)
    nn = np.maximum(nn, 1e-30)
    out = np.empty(points.shape[0], dtype=np.float64)

    def seg_dist2(p, a, ab):
        ap = p[:, None] - a[None]
        t = np.einsum("pfi,fi->pf", ap, ab) / np.maximum(np.einsum("fi,fi->f", ab, ab), 1e-30)
        t = np.clip(t, 0.0, 1.0)
        d = ap - t[..., None] * ab[None]
        return np.einsum("pfi,pfi->pf", d, d)

    for s in range(0, points.shape[0], chunk):
        p = points[s: s + chunk]
        ap = p[:, None] - v0[None]
        dist_plane = np.einsum("pfi,fi->pf", ap, n) / np.sqrt(nn)
        proj = p[:, None] - dist_plane[..., None] * (n / np.sqrt(nn)[:, None])[None]
        # barycentric inside test for the projection
        w = proj - v0[None]
        d00 = np.einsum("fi,fi->f", v1 - v0, v1 - v0)
        d01 = np.einsum("fi,fi->f", v1 - v0, v2 - v0)
        d11 = np.einsum("fi,fi->f", v2 - v0, v2 - v0)
        dw0 = np.einsum("pfi,fi->pf", w, v1 - v0)
        dw1 = np.einsum("pfi,fi->pf", w, v2 - v0)
        denom = np.maximum(d00 * d11 - d01 * d01, 1e-30)
        bu = (d11 * dw0 - d01 * dw1) / denom
        bv = (d00 * dw1 - d01 * dw0) / denom
        inside = (bu >= 0) & (bv >= 0) & (bu + bv <= 1)
        d2 = np.where(inside, dist_plane ** 2, np.inf)
        d2 = np.minimum(d2, seg_dist2(p, v0, v1 - v0))
        d2 = np.minimum(d2, seg_dist2(p, v1, v2 - v1))
        d2 = np.minimum(d2, seg_dist2(p, v2, v0 - v2))
        out[s: s + chunk] = np.sqrt(d2.min(axis=1))
    return out


def mesh_sdf(mesh: SurfaceMesh, ambiguous_limit: float = 0.01):
    """Signed distance callable for a watertight mesh target."""
    verts = mesh.vertices.numpy().astype(np.float64)
    faces = mesh.faces

    def sdf(points: np.ndarray) -> np.ndarray:
        d = point_mesh_distance(points, verts, faces)
        w = winding_numbers(points, verts, faces)
        ambiguous = (w > 0.25) & (w < 0.75)
        if ambiguous.mean() > ambiguous_limit:
            raise WindingAmbiguityError(
                f"{ambiguous.mean():.1%} of samples have ambiguous winding numbers")
        return np.where(w > 0.5, -d, d)

    return sdf


@dataclass
class FitReport:
    final_mse: float
    threshold: float
    iterations: int
    sample_count: int


def sample_training_points(sdf, rng: np.random.Generator, uniform: int = 4096,
                           near_surface: int = 4096, band: float = 0.08):
    """Stratified samples: uniform box + a band hugging the zero level set."""
    box = rng.uniform(-1.0, 1.0, size=(uniform + 4 * near_surface, 3))
    vals = sdf(box)
    order = np.argsort(np.abs(vals))
    seeds = box[order[:near_surface]]
    near = seeds + rng.normal(0.0, band, size=seeds.shape)
    near = np.clip(near, -1.0, 1.0)
    pts = np.concatenate([box[:uniform], near], axis=0)
    return pts, sdf(pts)


def fit_template(template, target_sdf, rng: np.random.Generator,
                 iterations: int = 1500, lr: float = 3e-3, batch: int = 1024,
                 threshold: float = 2e-3, uniform: int = 4096,
                 near_surface: int = 4096) -> FitReport:
    """Regress the template field onto a target SDF.

    target_sdf: callable (P, 3) -> (P,). Raises TemplateFitError when the
    final full-sample MSE stays above threshold.
    """
    pts, vals = sample_training_points(target_sdf, rng, uniform, near_surface)
    pts32 = pts.astype(np.float32)
    vals32 = vals.astype(np.float32)
    opt = Adam(template.parameters(), lr=lr)
    n = pts32.shape[0]
    for _ in range(iterations):
        idx = rng.integers(0, n, size=batch)
        pred = template.forward(pts32[idx])
        err = pred - Tensor(vals32[idx])
        loss = (err * err).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()

    final = float(np.mean((template.values(pts32) - vals32) ** 2))
    template.fitted = True
    if final > threshold:
        raise TemplateFitError(final, threshold)
    return FitReport(final_mse=final, threshold=threshold, iterations=iterations,
                     sample_count=n)
