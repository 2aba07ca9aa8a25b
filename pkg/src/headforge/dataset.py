"""Synthetic training renders: procedural head-like assemblies.

Each identity is an assembly of ellipsoids (head, ears, nose, chin) drawn
from a parameter vector; expressions perturb the assembly deterministically
per label index. Renders (normal maps and unlit albedo) go out as PFM files
with a JSONL manifest carrying the conditioning for each image.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .guidance import ID_EMBED_DIM
from .render import Camera, render_albedo, render_normals, write_pfm
from .tetmesh import SurfaceMesh, TetGrid, marching_tets

PARAM_DIM = 8
DOMAINS = ("normal", "albedo")
MAX_EXPRESSION_LABELS = 23


def identity_params(identity: int, seed: int = 0) -> np.ndarray:
    """Deterministic assembly parameters for one synthetic identity.

    Layout: head axes (3), nose radius, nose height, ear radius, ear spread,
    chin radius.
    """
    rng = np.random.default_rng((seed + 1) * 1_000_003 + identity)
    head = rng.uniform((0.32, 0.40, 0.35), (0.45, 0.55, 0.50))
    nose_r = rng.uniform(0.05, 0.10)
    nose_y = rng.uniform(-0.08, 0.10)
    ear_r = rng.uniform(0.06, 0.12)
    ear_x = rng.uniform(0.9, 1.1)
    chin_r = rng.uniform(0.08, 0.16)
    return np.array([*head, nose_r, nose_y, ear_r, ear_x, chin_r],
                    dtype=np.float64)


def expression_offsets(expression: int) -> tuple[float, float]:
    """Per-label perturbation: (chin drop, nose scale factor)."""
    if not 0 <= expression < MAX_EXPRESSION_LABELS:
        raise ValueError(f"expression label must be in [0, {MAX_EXPRESSION_LABELS})")
    rng = np.random.default_rng(7_919 + expression)
    drop = float(rng.uniform(0.0, 0.14)) if expression else 0.0
    scale = float(rng.uniform(0.8, 1.3)) if expression else 1.0
    return drop, scale


def _ellipsoid(points, center, axes):
    q = (points - np.asarray(center)) / np.asarray(axes)
    return (np.linalg.norm(q, axis=1) - 1.0) * float(np.min(axes))


def assembly_sdf(params: np.ndarray, expression: int = 0):
    """Signed distance of the head assembly for one (identity, expression)."""
    hx, hy, hz, nose_r, nose_y, ear_r, ear_x, chin_r = params
    chin_drop, nose_scale = expression_offsets(expression)

    def sdf(points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        d = _ellipsoid(p, (0.0, 0.0, 0.0), (hx, hy, hz))
        nose = _ellipsoid(p, (0.0, nose_y, hz * 0.95),
                          (nose_r * nose_scale,) * 3)
        ear_l = _ellipsoid(p, (-hx * ear_x, 0.05, 0.0), (ear_r,) * 3)
        ear_r_ = _ellipsoid(p, (hx * ear_x, 0.05, 0.0), (ear_r,) * 3)
        chin = _ellipsoid(p, (0.0, -hy * 0.9 - chin_drop, hz * 0.35),
                          (chin_r,) * 3)
        return np.minimum.reduce([d, nose, ear_l, ear_r_, chin]).astype(np.float32)

    return sdf


def assembly_mesh(params: np.ndarray, expression: int = 0,
                  grid_resolution: int = 24) -> SurfaceMesh:
    grid = TetGrid(grid_resolution)
    values = assembly_sdf(params, expression)(grid.vertices)
    with no_grad():
        mesh = marching_tets(Tensor(grid.vertices), Tensor(values), grid.tets)
    if mesh.num_faces == 0:
        raise ValueError("assembly produced an empty surface")
    return mesh


def assembly_albedo(params: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Procedural per-vertex skin colors: identity tone plus a soft stripe."""
    rng = np.random.default_rng(int(np.abs(params * 1000).sum()))
    tone = rng.uniform(0.25, 0.75, size=3)
    freq = rng.uniform(3.0, 8.0)
    stripe = 0.5 + 0.5 * np.sin(freq * positions.sum(axis=1))
    albedo = tone[None, :] * (0.75 + 0.25 * stripe[:, None])
    return np.clip(albedo, 0.0, 1.0).astype(np.float32)


def identity_embedding(params: np.ndarray) -> np.ndarray:
    """Unit-norm parameter vector zero-padded to the wire embedding width."""
    vec = np.zeros(ID_EMBED_DIM, dtype=np.float64)
    vec[:PARAM_DIM] = params / np.linalg.norm(params)
    return vec


def render_dataset(out_dir, identities: int, expressions: int, views: int,
                   size: int = 64, seed: int = 0, grid_resolution: int = 24,
                   domains=DOMAINS) -> dict:
    """Write PFM renders plus dataset.jsonl and meta.json; returns meta."""
    if not 1 <= expressions <= MAX_EXPRESSION_LABELS:
        raise ValueError(f"expressions must be in [1, {MAX_EXPRESSION_LABELS}]")
    for domain in domains:
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain {domain!r}")
    out_dir = Path(out_dir)
    images = out_dir / "images"
    images.mkdir(parents=True, exist_ok=True)
    cam_rng = np.random.default_rng(seed + 17)
    records = []
    for i in range(identities):
        params = identity_params(i, seed)
        y_id = identity_embedding(params)
        for e in range(expressions):
            mesh = assembly_mesh(params, e, grid_resolution)
            albedo = Tensor(assembly_albedo(params, mesh.vertices.numpy()))
            for v in range(views):
                cam = Camera(azimuth=float(cam_rng.uniform(-65.0, 65.0)),
                             elevation=float(cam_rng.uniform(-15.0, 15.0)),
                             height=size, width=size)
                with no_grad():
                    passes = {"normal": render_normals(mesh, cam),
                              "albedo": render_albedo(mesh, albedo, cam)}
                for domain in domains:
                    name = f"id{i:03d}_exp{e:02d}_view{v:02d}_{domain}.pfm"
                    write_pfm(images / name,
                              passes[domain].image.numpy())
                    records.append({
                        "image": f"images/{name}",
                        "domain": domain,
                        "identity": i,
                        "y_id": [round(x, 9) for x in y_id.tolist()],
                        "y_exp": e,
                        "caption": f"synthetic head {i} expression {e}",
                        "azimuth_deg": cam.azimuth,
                        "elevation_deg": cam.elevation,
                    })
    with open(out_dir / "dataset.jsonl", "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    meta = {"identities": identities, "expressions": expressions,
            "views": views, "size": size, "seed": seed,
            "domains": list(domains), "records": len(records),
            "embedding_dim": ID_EMBED_DIM, "param_dim": PARAM_DIM}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2,
                                                  sort_keys=True) + "\n")
    return meta
