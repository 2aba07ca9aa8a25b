"""Asset export: UV atlases, texture baking, and OBJ/MTL/map bundles.

The atlas projects each face along its dominant normal axis into one of six
charts (+x, -x, +y, -y, +z, -z), then shelf-packs the chart rectangles into
the unit square. Baking rasterizes every face's UV triangle, maps covered
texel centers back to surface points through the shared barycentrics, and
evaluates the texture field there, so a texel center reproduces the field
value at its surface point exactly (up to image quantization).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from ..autodiff import no_grad
from ..render import write_pfm, write_png
from ..tetmesh import write_obj
from .config import RunConfig
from .errors import PipelineError

# (u, v) world axes for each dominant-axis chart
CHART_AXES = ((1, 2), (1, 2), (0, 2), (0, 2), (0, 1), (0, 1))
PAD_TEXELS = 4
DILATE_PASSES = 4
MANIFEST_VERSION = 1


@dataclass
class Atlas:
    uvs: np.ndarray        # (3F, 2) in [0, 1], one entry per face corner
    face_uvs: np.ndarray   # (F, 3) indices into uvs
    chart_ids: np.ndarray  # (F,) chart per face
    reassigned: int = 0


@dataclass
class AssetBundle:
    out_dir: str
    manifest_path: str
    mesh_paths: list = dataclass_field(default_factory=list)
    map_paths: list = dataclass_field(default_factory=list)
    manifest: dict = dataclass_field(default_factory=dict)
    reassigned_faces: int = 0


def assign_charts(vertices: np.ndarray, faces: np.ndarray):
    """Dominant-axis chart per face. Zero-area faces inherit the previous
    face's chart (chart 0 when there is none) and are counted."""
    v0 = vertices[faces[:, 0]]
    n = np.cross(vertices[faces[:, 1]] - v0, vertices[faces[:, 2]] - v0)
    dominant = np.argmax(np.abs(n), axis=1)
    charts = dominant * 2 + (n[np.arange(len(faces)), dominant] < 0)
    degenerate = np.linalg.norm(n, axis=1) < 1e-12
    reassigned = int(degenerate.sum())
    last = 0
    for i in range(len(faces)):
        if degenerate[i]:
            charts[i] = last
        else:
            last = charts[i]
    return charts.astype(np.int64), reassigned


def build_atlas(vertices: np.ndarray, faces: np.ndarray,
                resolution: int = 1024) -> Atlas:
    """Project, pack, and emit per-corner UVs for every face."""
    if len(faces) == 0:
        raise PipelineError("cannot build a UV atlas for an empty mesh")
    charts, reassigned = assign_charts(vertices, faces)

    # Per-corner projected 2D coordinates, per face
    corners = vertices[faces]                       # (F, 3, 3)
    proj = np.zeros((len(faces), 3, 2), np.float64)
    for c in range(6):
        sel = charts == c
        if not sel.any():
            continue
        ua, va = CHART_AXES[c]
        proj[sel, :, 0] = corners[sel, :, ua]
        proj[sel, :, 1] = corners[sel, :, va]

    # Merge charts whose projected bbox collapsed into the largest chart
    sizes = np.bincount(charts, minlength=6)
    for c in range(6):
        sel = charts == c
        if not sel.any():
            continue
        ext = proj[sel].reshape(-1, 2).max(0) - proj[sel].reshape(-1, 2).min(0)
        if min(ext) < 1e-9 and c != int(np.argmax(sizes)):
            target = int(np.argmax(sizes))
            reassigned += int(sel.sum())
            charts[sel] = target
            ua, va = CHART_AXES[target]
            proj[sel, :, 0] = corners[sel, :, ua]
            proj[sel, :, 1] = corners[sel, :, va]

    active = [c for c in range(6) if (charts == c).any()]
    mins, extents = {}, {}
    for c in active:
        flat = proj[charts == c].reshape(-1, 2)
        mins[c] = flat.min(0)
        extents[c] = np.maximum(flat.max(0) - flat.min(0), 1e-9)

    pad = PAD_TEXELS / resolution
    total_area = sum(float(extents[c][0] * extents[c][1]) for c in active)
    scale = np.sqrt(0.45 / total_area)
    offsets = None
    for _ in range(60):
        offsets = _shelf_pack(active, extents, scale, pad)
        if offsets is not None:
            break
        scale *= 0.85
    if offsets is None:
        raise PipelineError("chart packing failed to converge")

    uvs = np.zeros((len(faces), 3, 2), np.float64)
    for c in active:
        sel = charts == c
        uvs[sel] = offsets[c] + (proj[sel] - mins[c]) * scale
    face_uvs = np.arange(len(faces) * 3, dtype=np.int64).reshape(-1, 3)
    return Atlas(uvs=uvs.reshape(-1, 2).astype(np.float32),
                 face_uvs=face_uvs, chart_ids=charts, reassigned=reassigned)


def _shelf_pack(active, extents, scale, pad):
    """Place charts tallest-first on left-to-right shelves; None if they
    do not fit in the unit square at this scale."""
    order = sorted(active, key=lambda c: -extents[c][1])
    offsets = {}
    x = y = shelf_h = 0.0
    for c in order:
        w = extents[c][0] * scale + 2 * pad
        h = extents[c][1] * scale + 2 * pad
        if w > 1.0 or h > 1.0:
            return None
        if x + w > 1.0:
            y += shelf_h
            x = shelf_h = 0.0
        if y + h > 1.0:
            return None
        offsets[c] = np.array([x + pad, y + pad])
        x += w
        shelf_h = max(shelf_h, h)
    return offsets


def bake_maps(vertices: np.ndarray, faces: np.ndarray, atlas: Atlas,
              field, code, resolution: int, return_positions: bool = False):
    """Rasterize UV triangles and evaluate the texture field per texel.

    Returns dict with albedo (R, R, 3), roughness (R, R), metallic (R, R),
    coverage (R, R) bool, indexed [iy, ix] with iy = v * R - 0.5 (v up).
    Uncovered texels are filled by edge dilation. With return_positions the
    dict also carries the 3D surface point of every covered texel.
    """
    res = resolution
    uv_tris = atlas.uvs[atlas.face_uvs].astype(np.float64) * res - 0.5
    positions, texels = [], []
    for f in range(len(faces)):
        a, b, c = uv_tris[f]
        lo = np.maximum(np.floor(np.minimum(np.minimum(a, b), c)), 0).astype(int)
        hi = np.minimum(np.ceil(np.maximum(np.maximum(a, b), c)),
                        res - 1).astype(int)
        if (hi < lo).any():
            continue
        gx, gy = np.meshgrid(np.arange(lo[0], hi[0] + 1),
                             np.arange(lo[1], hi[1] + 1), indexing="ij")
        px = gx.ravel().astype(np.float64)
        py = gy.ravel().astype(np.float64)
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(det) < 1e-12:
            continue
        w1 = ((px - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (py - a[1])) / det
        w2 = ((b[0] - a[0]) * (py - a[1]) - (px - a[0]) * (b[1] - a[1])) / det
        w0 = 1.0 - w1 - w2
        eps = 1e-9
        inside = (w0 >= -eps) & (w1 >= -eps) & (w2 >= -eps)
        if not inside.any():
            continue
        tri = vertices[faces[f]]
        pos = (w0[inside, None] * tri[0] + w1[inside, None] * tri[1]
               + w2[inside, None] * tri[2])
        positions.append(pos.astype(np.float32))
        texels.append(np.stack([gx.ravel()[inside], gy.ravel()[inside]], 1))

    albedo = np.full((res, res, 3), 0.0, np.float32)
    rough = np.zeros((res, res), np.float32)
    metal = np.zeros((res, res), np.float32)
    coverage = np.zeros((res, res), bool)
    pos_map = np.zeros((res, res, 3), np.float32) if return_positions else None
    if positions:
        pts = np.concatenate(positions, 0)
        tex = np.concatenate(texels, 0)
        with no_grad():
            alb_t, rough_t, metal_t = field.forward(pts, code)
        ix, iy = tex[:, 0], tex[:, 1]
        albedo[iy, ix] = alb_t.numpy()
        rough[iy, ix] = rough_t.numpy()
        metal[iy, ix] = metal_t.numpy()
        coverage[iy, ix] = True
        if pos_map is not None:
            pos_map[iy, ix] = pts

    filled = coverage.copy()
    for _ in range(DILATE_PASSES):
        if filled.all():
            break
        albedo, rough, metal, filled = _dilate(albedo, rough, metal, filled)
    out = {"albedo": albedo, "roughness": rough, "metallic": metal,
           "coverage": coverage}
    if pos_map is not None:
        out["positions"] = pos_map
    return out


def _dilate(albedo, rough, metal, covered):
    """One pass of nearest-neighbor edge padding into uncovered texels."""
    acc = np.zeros_like(albedo)
    acc_r = np.zeros_like(rough)
    acc_m = np.zeros_like(metal)
    count = np.zeros(covered.shape, np.float32)
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        shifted = np.roll(covered, (dy, dx), (0, 1))
        if dy == 1:
            shifted[0, :] = False
        if dy == -1:
            shifted[-1, :] = False
        if dx == 1:
            shifted[:, 0] = False
        if dx == -1:
            shifted[:, -1] = False
        acc += np.roll(albedo, (dy, dx), (0, 1)) * shifted[..., None]
        acc_r += np.roll(rough, (dy, dx), (0, 1)) * shifted
        acc_m += np.roll(metal, (dy, dx), (0, 1)) * shifted
        count += shifted
    grow = ~covered & (count > 0)
    albedo = albedo.copy()
    rough = rough.copy()
    metal = metal.copy()
    albedo[grow] = acc[grow] / count[grow, None]
    rough[grow] = acc_r[grow] / count[grow]
    metal[grow] = acc_m[grow] / count[grow]
    return albedo, rough, metal, covered | grow


def _gray3(img: np.ndarray) -> np.ndarray:
    return np.repeat(img[..., None], 3, axis=2)


def bilinear_sample(image: np.ndarray, uv) -> np.ndarray:
    """Sample a written map (top row = v max) at uv with bilinear filtering."""
    h, w = image.shape[:2]
    u, v = float(uv[0]), float(uv[1])
    x = np.clip(u * w - 0.5, 0.0, w - 1.0)
    y = np.clip((1.0 - v) * h - 0.5, 0.0, h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def export_assets(geometry, texture, expressions, config: RunConfig,
                  out_dir) -> AssetBundle:
    """Write one OBJ+MTL+map set per expression plus a bundle manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolution = config["export.resolution"]
    identity = config["export.identity"]
    bundle = AssetBundle(out_dir=str(out), manifest_path=str(out / "manifest.json"))
    entries = []
    for k in expressions:
        with no_grad():
            mesh = geometry.extract(k)
        if mesh.num_faces == 0:
            raise PipelineError(f"expression {k} extracts an empty mesh")
        verts = mesh.vertices.numpy().astype(np.float32)
        faces = mesh.faces
        atlas = build_atlas(verts, faces, resolution)
        bundle.reassigned_faces += atlas.reassigned
        maps = bake_maps(verts, faces, atlas, texture.field,
                         texture.codebook[k], resolution)

        mesh_name = f"mesh_{k:02d}.obj"
        mtl_name = f"mesh_{k:02d}.mtl"
        files = {
            "albedo_png": f"albedo_{k:02d}.png",
            "albedo_pfm": f"albedo_{k:02d}.pfm",
            "roughness_png": f"roughness_{k:02d}.png",
            "roughness_pfm": f"roughness_{k:02d}.pfm",
            "metallic_png": f"metallic_{k:02d}.png",
            "metallic_pfm": f"metallic_{k:02d}.pfm",
        }
        material = f"expression_{k:02d}"
        write_obj(out / mesh_name, verts, faces, uvs=atlas.uvs,
                  face_uvs=atlas.face_uvs, mtllib=mtl_name, material=material)
        _write_mtl(out / mtl_name, material, files)
        # maps are v-indexed bottom-up; image files put v = 1 on the top row
        albedo = np.flipud(maps["albedo"])
        rough = np.flipud(maps["roughness"])
        metal = np.flipud(maps["metallic"])
        write_png(out / files["albedo_png"], albedo)
        write_pfm(out / files["albedo_pfm"], albedo)
        write_png(out / files["roughness_png"], _gray3(rough))
        write_pfm(out / files["roughness_pfm"], rough)
        write_png(out / files["metallic_png"], _gray3(metal))
        write_pfm(out / files["metallic_pfm"], metal)

        bundle.mesh_paths.append(str(out / mesh_name))
        bundle.map_paths.append({key: str(out / name)
                                 for key, name in files.items()})
        entries.append({"expression": int(k), "label": material,
                        "mesh": mesh_name, "mtl": mtl_name, "maps": files,
                        "reassigned_faces": atlas.reassigned})

    manifest = {
        "version": MANIFEST_VERSION,
        "identity": identity,
        "resolution": resolution,
        "config_hash": config.hash(),
        "expressions": entries,
    }
    with open(bundle.manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    bundle.manifest = manifest
    return bundle


def _write_mtl(path, material: str, files: dict):
    lines = [
        f"newmtl {material}",
        "Kd 1 1 1",
        f"map_Kd {files['albedo_png']}",
        f"map_Pr {files['roughness_png']}",
        f"map_Pm {files['metallic_png']}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
