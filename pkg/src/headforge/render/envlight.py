"""Latitude-longitude environment lights with precomputed shading tables."""
from __future__ import annotations

import numpy as np

ENV_HEIGHT = 16
ENV_WIDTH = 32
MIP_ROUGHNESS = (0.25, 0.5, 1.0)


def _texel_directions(height: int, width: int):
    """Unit directions and solid angles for every latlong texel center.

    Row 0 is the +Y pole (theta = polar angle), column phi grows so that a
    positive Y rotation shifts content toward higher columns.
    """
    theta = np.pi * (np.arange(height) + 0.5) / height
    phi = 2.0 * np.pi * (np.arange(width) + 0.5) / width
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    dirs = np.stack([st[:, None] * sp[None, :],
                     np.broadcast_to(ct[:, None], (height, width)),
                     st[:, None] * cp[None, :]], axis=-1)
    omega = st[:, None] * (np.pi / height) * (2.0 * np.pi / width)
    return dirs, np.broadcast_to(omega, (height, width))


def _cos_power_exponent(roughness: float) -> float:
    return float(np.clip(2.0 / roughness ** 4 - 2.0, 1.0, 512.0))


class EnvLight:
    """Linear RGB radiance map plus a Y-axis rotation applied at lookup.

    Precomputes a diffuse irradiance table and cosine-lobe prefiltered copies
    at fixed roughness levels, all at the base resolution.
    """

    def __init__(self, radiance: np.ndarray, rotation: float = 0.0):
        radiance = np.asarray(radiance, dtype=np.float32)
        if radiance.ndim != 3 or radiance.shape[2] != 3:
            raise ValueError(f"radiance must be (H, W, 3), got {radiance.shape}")
        if not np.isfinite(radiance).all() or (radiance < 0).any():
            raise ValueError("radiance must be finite and non-negative")
        self.radiance = radiance
        self.rotation = float(rotation)
        h, w = radiance.shape[:2]
        dirs, omega = _texel_directions(h, w)
        flat_dirs = dirs.reshape(-1, 3)
        flat_l = radiance.reshape(-1, 3).astype(np.float64)
        flat_o = omega.reshape(-1)

        cos = flat_dirs @ flat_dirs.T  # (HW, HW) all texel pairs
        clipped = np.maximum(cos, 0.0)
        weights = clipped * flat_o[None, :]
        self.diffuse = (weights @ flat_l).reshape(h, w, 3).astype(np.float32)

        self.mips = []
        for rough in MIP_ROUGHNESS:
            k = _cos_power_exponent(rough)
            lobe = clipped ** k * flat_o[None, :]
            norm = lobe.sum(axis=1, keepdims=True)
            mip = (lobe @ flat_l) / np.maximum(norm, 1e-12)
            self.mips.append(mip.reshape(h, w, 3).astype(np.float32))

    @property
    def shape(self):
        return self.radiance.shape

    def rotated(self, rotation: float) -> "EnvLight":
        out = object.__new__(EnvLight)
        out.radiance = self.radiance
        out.diffuse = self.diffuse
        out.mips = self.mips
        out.rotation = float(rotation)
        return out

    def _lookup(self, table: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Bilinear latlong sample with longitude wrap and rotation offset."""
        h, w = table.shape[:2]
        d = dirs / np.maximum(np.linalg.norm(dirs, axis=-1, keepdims=True), 1e-12)
        theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
        phi = np.arctan2(d[..., 0], d[..., 2]) - np.radians(self.rotation)
        row = theta / np.pi * h - 0.5
        col = (phi / (2.0 * np.pi)) % 1.0 * w - 0.5
        r0 = np.floor(row).astype(np.int64)
        c0 = np.floor(col).astype(np.int64)
        fr = (row - r0)[..., None]
        fc = (col - c0)[..., None]
        r0c = np.clip(r0, 0, h - 1)
        r1c = np.clip(r0 + 1, 0, h - 1)
        c0w = c0 % w
        c1w = (c0 + 1) % w
        top = table[r0c, c0w] * (1 - fc) + table[r0c, c1w] * fc
        bot = table[r1c, c0w] * (1 - fc) + table[r1c, c1w] * fc
        return top * (1 - fr) + bot * fr

    def sample_radiance(self, dirs: np.ndarray) -> np.ndarray:
        return self._lookup(self.radiance, dirs)

    def sample_diffuse(self, normals: np.ndarray) -> np.ndarray:
        """Cosine-weighted irradiance for the given surface normals."""
        return self._lookup(self.diffuse, normals)

    def sample_prefiltered(self, dirs: np.ndarray, level: int) -> np.ndarray:
        return self._lookup(self.mips[level], dirs)


def _sky(height, width, horizon, zenith):
    t = np.linspace(0.0, 1.0, height)[:, None, None]
    return (np.asarray(zenith) * (1 - t) + np.asarray(horizon) * t) * np.ones((1, width, 1))


def _point_lights(height, width, seeds):
    dirs, _ = _texel_directions(height, width)
    img = np.full((height, width, 3), 0.05)
    for center, color, sharp in seeds:
        c = np.asarray(center, dtype=np.float64)
        c /= np.linalg.norm(c)
        img += np.asarray(color) * np.maximum(dirs @ c, 0.0)[..., None] ** sharp
    return img


def builtin_lights(height: int = ENV_HEIGHT, width: int = ENV_WIDTH) -> list[EnvLight]:
    """Procedural lighting bank: skies, studio setups, and colored washes."""
    maps = [
        np.ones((height, width, 3)),
        _sky(height, width, horizon=(0.9, 0.7, 0.5), zenith=(0.2, 0.4, 0.9)),
        _sky(height, width, horizon=(0.3, 0.3, 0.35), zenith=(1.2, 1.2, 1.1)),
        _point_lights(height, width, [((1, 1, 1), (2.0, 1.9, 1.8), 8.0)]),
        _point_lights(height, width, [((1, 0.5, 0.5), (1.5, 1.4, 1.3), 6.0),
                                      ((-1, 0.2, -0.3), (0.5, 0.55, 0.7), 4.0)]),
        _point_lights(height, width, [((0, 1, 0.2), (1.8, 1.8, 1.8), 10.0),
                                      ((0.8, -0.2, 0.6), (0.4, 0.3, 0.25), 3.0)]),
        _sky(height, width, horizon=(1.1, 0.5, 0.25), zenith=(0.15, 0.2, 0.45)),
        _point_lights(height, width, [((-1, 0.8, 0.5), (1.2, 1.3, 1.5), 5.0),
                                      ((1, 0.4, -0.8), (1.4, 1.1, 0.8), 5.0),
                                      ((0, -1, 0), (0.2, 0.25, 0.2), 2.0)]),
    ]
    return [EnvLight(m.astype(np.float32)) for m in maps]


def sample_lighting(rng: np.random.Generator, bank: list[EnvLight]) -> EnvLight:
    """Uniform map choice with a uniform Y rotation in [0, 360)."""
    if not bank:
        raise ValueError("lighting bank is empty")
    light = bank[int(rng.integers(0, len(bank)))]
    return light.rotated(float(rng.uniform(0.0, 360.0)))
