"""Normal-map and physically-based shading passes over the rasterizer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, no_grad, ops
from .camera import Camera
from .envlight import EnvLight
from .raster import Framebuffer, rasterize

MIP_LEVELS = (0.25, 0.5, 1.0)


@dataclass
class RenderResult:
    image: Tensor  # (H, W, 3), linear [0, 1]
    framebuffer: Framebuffer
    replaced_normals: int = 0


def _face_normal_fallback(mesh, cam_rotation, fb, norms, eps=1e-6):
    """Constant per-pixel replacement normals where interpolation collapsed.

    Returns (keep mask (H,W,1), fallback image (H,W,3), count). Normals are
    taken from the covering face, optionally rotated into camera space.
    """
    h, w = fb.mask.shape
    bad = fb.mask & (norms[..., 0] < eps)
    count = int(bad.sum())
    fallback = np.zeros((h, w, 3), np.float32)
    if count:
        with no_grad():
            fn = mesh.face_normals().numpy()
        fn = fn / np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-12)
        if cam_rotation is not None:
            fn = fn @ cam_rotation.T.astype(fn.dtype)
        fallback[bad] = fn[fb.face_ids[bad]]
    keep = (fb.mask & ~bad)[..., None].astype(np.float32)
    return Tensor(keep), Tensor(fallback), count


def render_normals(mesh, cam: Camera) -> RenderResult:
    """Camera-space normal map, encoded n*0.5+0.5, on a white background."""
    rot = cam.view_rotation().astype(np.float32)
    vn = mesh.vertex_normals()
    n_cam = ops.matmul(vn, Tensor(rot.T))
    fb = rasterize(mesh, cam, n_cam)

    norms = np.linalg.norm(fb.attrs.numpy(), axis=-1, keepdims=True)
    keep, fallback, count = _face_normal_fallback(mesh, rot, fb, norms)
    # clamp before sqrt so zero-normal pixels get a zero gradient, not 0/0
    mag = ops.sqrt(ops.clamp(ops.sum(fb.attrs * fb.attrs, axis=2, keepdims=True),
                             1e-16, np.inf))
    unit = fb.attrs / mag
    unit = unit * keep + fallback
    mask = fb.mask[..., None].astype(np.float32)
    encoded = (unit * 0.5 + 0.5) * Tensor(mask)
    image = encoded + Tensor(1.0 - mask)  # white background
    return RenderResult(image=image, framebuffer=fb, replaced_normals=count)


def render_albedo(mesh, albedo: Tensor, cam: Camera,
                  background=(1.0, 1.0, 1.0)) -> RenderResult:
    """Unlit albedo pass: interpolated color on a constant background."""
    fb = rasterize(mesh, cam, albedo)
    mask = fb.mask[..., None].astype(np.float32)
    bg = np.asarray(background, np.float32) * (1.0 - mask)
    image = ops.clamp(fb.attrs * Tensor(mask) + Tensor(bg), 0.0, 1.0)
    return RenderResult(image=image, framebuffer=fb)


def _env_brdf(f0: Tensor, roughness: Tensor, nov: np.ndarray) -> Tensor:
    """Analytic ambient BRDF scale: returns F0*A + B (clamped non-negative)."""
    rx = -roughness + 1.0
    ry = roughness * -0.0275 + 0.0425
    rz = roughness * -0.572 + 1.04
    rw = roughness * 0.022 - 0.04
    e = np.exp2(-9.28 * nov).astype(np.float32)
    rx2 = rx * rx
    a004 = (rx2 - ops.relu(rx2 - e)) * rx + ry  # min(rx^2, e) * rx + ry
    a = a004 * -1.04 + rz
    b = a004 * 1.04 + rw
    return ops.relu(f0 * a + b)


def shade_pbr(mesh, albedo: Tensor, roughness: Tensor, metallic: Tensor,
              cam: Camera, light: EnvLight,
              background=(1.0, 1.0, 1.0)) -> RenderResult:
    """Image-based shading: Lambertian diffuse plus prefiltered specular.

    albedo (V, 3), roughness (V,), metallic (V,) in [0, 1]. Gradients flow to
    the material tensors; mesh geometry and the light are treated as fixed.
    """
    v_count = mesh.num_vertices
    vn = mesh.vertex_normals()
    attrs = ops.concat([albedo,
                        ops.reshape(roughness, (v_count, 1)),
                        ops.reshape(metallic, (v_count, 1)),
                        vn, mesh.vertices], axis=1)
    fb = rasterize(mesh, cam, attrs)
    h, w = fb.mask.shape

    def chans(lo, hi):
        cols = [ops.reshape(ops.col(fb.attrs, j), (h, w, 1)) for j in range(lo, hi)]
        return cols[0] if len(cols) == 1 else ops.concat(cols, axis=2)

    alb = chans(0, 3)
    rough = ops.clamp(chans(3, 4), 0.0, 1.0)
    metal = ops.clamp(chans(4, 5), 0.0, 1.0)

    raw = fb.attrs.numpy()
    n = raw[..., 5:8].astype(np.float64)
    norms = np.linalg.norm(n, axis=-1, keepdims=True)
    bad = fb.mask & (norms[..., 0] < 1e-6)
    count = int(bad.sum())
    if count:
        with no_grad():
            fn = mesh.face_normals().numpy().astype(np.float64)
        fn /= np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-12)
        n[bad] = fn[fb.face_ids[bad]]
        norms = np.linalg.norm(n, axis=-1, keepdims=True)
    n = n / np.maximum(norms, 1e-12)

    pos = raw[..., 8:11].astype(np.float64)
    v = cam.eye[None, None, :] - pos
    v /= np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-12)
    nov = np.clip(np.einsum("hwc,hwc->hw", n, v), 0.0, 1.0)[..., None]
    refl = 2.0 * nov * n - v

    e_d = Tensor(light.sample_diffuse(n).astype(np.float32))
    pf = [Tensor(light.sample_prefiltered(refl, m).astype(np.float32))
          for m in range(len(MIP_LEVELS))]
    l0, l1, l2 = MIP_LEVELS
    w0 = ops.clamp((-rough + l1) / (l1 - l0), 0.0, 1.0)
    w2 = ops.clamp((rough - l1) / (l2 - l1), 0.0, 1.0)
    w1 = -(w0 + w2) + 1.0
    prefiltered = w0 * pf[0] + w1 * pf[1] + w2 * pf[2]

    f0 = alb * metal + (-metal + 1.0) * 0.04
    diffuse = alb * e_d * ((-metal + 1.0) * (1.0 / np.pi))
    specular = prefiltered * _env_brdf(f0, rough, nov)
    color = ops.clamp(diffuse + specular, 0.0, 1.0)

    mask = fb.mask[..., None].astype(np.float32)
    bg = np.asarray(background, np.float32) * (1.0 - mask)
    image = color * Tensor(mask) + Tensor(bg)
    return RenderResult(image=image, framebuffer=fb, replaced_normals=count)
