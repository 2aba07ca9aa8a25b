"""Differentiable triangle rasterization.

Coverage and depth resolution run in plain numpy and are treated as fixed;
barycentric weights for the surviving pixel/face pairs are then recomputed
through the autodiff graph, so gradients reach vertex positions and vertex
attributes but not the silhouette.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, astensor, ops
from .camera import NEAR_PLANE, Camera


@dataclass
class Framebuffer:
    """Interpolated attributes plus coverage bookkeeping.

    attrs is (H, W, C) with zeros outside coverage; depth is the camera-space
    distance (inf outside); face_ids maps covered pixels to their source face.
    """

    attrs: Tensor
    mask: np.ndarray
    depth: np.ndarray
    face_ids: np.ndarray

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())


def composite(fb: Framebuffer, background) -> Tensor:
    """Overlay framebuffer attrs onto a constant background color."""
    h, w = fb.mask.shape
    c = fb.attrs.shape[2]
    bg = np.broadcast_to(np.asarray(background, dtype=fb.attrs.dtype), (h, w, c))
    keep = fb.mask[..., None].astype(fb.attrs.dtype)
    return fb.attrs + Tensor((bg * (1.0 - keep)).astype(fb.attrs.dtype))


def _empty_framebuffer(cam: Camera, channels: int) -> Framebuffer:
    h, w = cam.height, cam.width
    return Framebuffer(attrs=Tensor(np.zeros((h, w, channels), np.float32)),
                       mask=np.zeros((h, w), bool),
                       depth=np.full((h, w), np.inf, np.float32),
                       face_ids=np.full((h, w), -1, np.int64))


def rasterize(mesh, cam: Camera, attrs: Tensor) -> Framebuffer:
    """Z-buffered, perspective-correct rasterization of per-vertex attributes.

    attrs: (V, C) Tensor. Backfaces (by screen-space orientation) and faces
    touching the near plane are dropped whole.
    """
    attrs = astensor(attrs)
    if attrs.shape[0] != mesh.num_vertices:
        raise ValueError(
            f"attrs rows {attrs.shape[0]} != vertex count {mesh.num_vertices}")
    h, w = cam.height, cam.width
    channels = attrs.shape[1]
    if mesh.num_faces == 0:
        return _empty_framebuffer(cam, channels)

    verts = mesh.vertices
    n_verts = verts.shape[0]
    hom = ops.concat([verts, Tensor(np.ones((n_verts, 1), verts.dtype))], axis=1)
    clip = ops.matmul(hom, Tensor(cam.view_projection().T.astype(verts.dtype)))
    w_raw = ops.col(clip, 3)
    w_safe = ops.clamp(w_raw, NEAR_PLANE, np.inf)
    inv_w = Tensor(np.float32(1.0)) / w_safe
    ndc_x = ops.col(clip, 0) * inv_w
    ndc_y = ops.col(clip, 1) * inv_w
    sx = (ndc_x + 1.0) * (w / 2.0)
    sy = (1.0 - ndc_y) * (h / 2.0)

    faces = mesh.faces
    fx = sx.numpy()[faces]  # (F, 3)
    fy = sy.numpy()[faces]
    front = w_raw.numpy()[faces].min(axis=1) > NEAR_PLANE
    area2 = ((fx[:, 1] - fx[:, 0]) * (fy[:, 2] - fy[:, 0])
             - (fy[:, 1] - fy[:, 0]) * (fx[:, 2] - fx[:, 0]))
    keep = front & (area2 < -1e-12)  # outward CCW faces flip to CW on screen
    if not keep.any():
        return _empty_framebuffer(cam, channels)
    fid = np.nonzero(keep)[0]
    fx, fy = fx[fid], fy[fid]

    # pixel centers (p + 0.5) inside the face bbox, clipped to the viewport
    x0 = np.clip(np.ceil(fx.min(axis=1) - 0.5), 0, w - 1).astype(np.int64)
    x1 = np.clip(np.floor(fx.max(axis=1) - 0.5), 0, w - 1).astype(np.int64)
    y0 = np.clip(np.ceil(fy.min(axis=1) - 0.5), 0, h - 1).astype(np.int64)
    y1 = np.clip(np.floor(fy.max(axis=1) - 0.5), 0, h - 1).astype(np.int64)
    nx = x1 - x0 + 1
    ny = y1 - y0 + 1
    counts = np.maximum(nx, 0) * np.maximum(ny, 0)
    live = counts > 0
    if not live.any():
        return _empty_framebuffer(cam, channels)
    fid, fx, fy = fid[live], fx[live], fy[live]
    x0, nx, y0, counts = x0[live], nx[live], y0[live], counts[live]

    total = int(counts.sum())
    cand = np.repeat(np.arange(fid.size), counts)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    offs = np.arange(total) - start[cand]
    px = x0[cand] + offs % nx[cand]
    py = y0[cand] + offs // nx[cand]
    cx_p = px + 0.5
    cy_p = py + 0.5

    ax, ay = fx[cand, 0], fy[cand, 0]
    bx, by = fx[cand, 1], fy[cand, 1]
    cx, cy = fx[cand, 2], fy[cand, 2]
    e0 = (cx - bx) * (cy_p - by) - (cy - by) * (cx_p - bx)
    e1 = (ax - cx) * (cy_p - cy) - (ay - cy) * (cx_p - cx)
    e2 = (bx - ax) * (cy_p - ay) - (by - ay) * (cx_p - ax)
    inside = (e0 <= 0) & (e1 <= 0) & (e2 <= 0)
    if not inside.any():
        return _empty_framebuffer(cam, channels)
    cand, px, py = cand[inside], px[inside], py[inside]
    e = np.stack([e0[inside], e1[inside], e2[inside]], axis=1)
    bary = e / e.sum(axis=1, keepdims=True)

    inv_w_np = inv_w.numpy()
    tri = faces[fid[cand]]
    inv_w_pix = (bary * inv_w_np[tri]).sum(axis=1)  # screen-linear in 1/w
    pixel_id = py * w + px
    order = np.lexsort((-inv_w_pix, pixel_id))
    first = np.ones(order.size, bool)
    first[1:] = pixel_id[order[1:]] != pixel_id[order[:-1]]
    sel = order[first]

    pix = pixel_id[sel]
    tri = tri[sel]
    face_of_pix = fid[cand[sel]]
    centers_x = (px[sel] + 0.5).astype(np.float32)
    centers_y = (py[sel] + 0.5).astype(np.float32)

    # differentiable barycentric recompute for the surviving pairs
    i0, i1, i2 = tri[:, 0], tri[:, 1], tri[:, 2]
    gx = [ops.gather(sx, i) for i in (i0, i1, i2)]
    gy = [ops.gather(sy, i) for i in (i0, i1, i2)]
    tcx, tcy = Tensor(centers_x), Tensor(centers_y)
    te0 = (gx[2] - gx[1]) * (tcy - gy[1]) - (gy[2] - gy[1]) * (tcx - gx[1])
    te1 = (gx[0] - gx[2]) * (tcy - gy[2]) - (gy[0] - gy[2]) * (tcx - gx[2])
    te2 = (gx[1] - gx[0]) * (tcy - gy[0]) - (gy[1] - gy[0]) * (tcx - gx[0])
    tsum = te0 + te1 + te2
    lw = [te / tsum * ops.gather(inv_w, i) for te, i in zip((te0, te1, te2), (i0, i1, i2))]
    denom = lw[0] + lw[1] + lw[2]
    out = None
    for lw_i, idx in zip(lw, (i0, i1, i2)):
        weight = ops.reshape(lw_i / denom, (pix.size, 1))
        term = weight * ops.gather(attrs, idx)
        out = term if out is None else out + term

    flat = ops.scatter_add(out, pix, h * w)
    fb_attrs = ops.reshape(flat, (h, w, channels))

    mask = np.zeros((h, w), bool)
    mask.flat[pix] = True
    depth = np.full((h, w), np.inf, np.float32)
    depth.flat[pix] = 1.0 / inv_w_pix[sel]
    face_ids = np.full((h, w), -1, np.int64)
    face_ids.flat[pix] = face_of_pix
    return Framebuffer(attrs=fb_attrs, mask=mask, depth=depth, face_ids=face_ids)
