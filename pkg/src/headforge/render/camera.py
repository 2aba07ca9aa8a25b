"""Look-at cameras over the origin plus train/eval pose sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_FOV_DEG = 40.0
NEAR_PLANE = 0.1
FAR_PLANE = 10.0

TRAIN_AZIMUTH = (-180.0, 180.0)
TRAIN_ELEVATION = (-30.0, 45.0)
TRAIN_RADIUS = (2.2, 3.0)

EVAL_ELEVATIONS = (-15.0, 0.0, 15.0)
EVAL_AZIMUTHS = (-65.0, -32.5, 0.0, 32.5, 65.0)
EVAL_RADIUS = 2.6


@dataclass(frozen=True)
class Camera:
    """Orbit camera looking at the origin, right-handed, +Y up.

    azimuth 0 places the eye on +Z; view space looks down -Z.
    """

    azimuth: float
    elevation: float
    radius: float = EVAL_RADIUS
    fov: float = DEFAULT_FOV_DEG
    height: int = 128
    width: int = 128

    def __post_init__(self):
        if self.radius <= NEAR_PLANE:
            raise ValueError(f"camera radius {self.radius} must exceed the near plane")

    @property
    def eye(self) -> np.ndarray:
        az = np.radians(self.azimuth)
        el = np.radians(self.elevation)
        return self.radius * np.array(
            [np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)],
            dtype=np.float64)

    def view_rotation(self) -> np.ndarray:
        """World-to-view 3x3 rotation (rows: right, up, -forward)."""
        eye = self.eye
        f = -eye / np.linalg.norm(eye)
        up = np.array([0.0, 1.0, 0.0])
        if abs(f[1]) > 0.999:  # looking straight up/down: pick a stable up
            up = np.array([0.0, 0.0, 1.0])
        r = np.cross(f, up)
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        return np.stack([r, u, -f])

    def view_matrix(self) -> np.ndarray:
        rot = self.view_rotation()
        m = np.eye(4)
        m[:3, :3] = rot
        m[:3, 3] = -rot @ self.eye
        return m

    def projection_matrix(self) -> np.ndarray:
        f = 1.0 / np.tan(np.radians(self.fov) / 2.0)
        aspect = self.width / self.height
        n, fa = NEAR_PLANE, FAR_PLANE
        m = np.zeros((4, 4))
        m[0, 0] = f / aspect
        m[1, 1] = f
        m[2, 2] = (fa + n) / (n - fa)
        m[2, 3] = 2.0 * fa * n / (n - fa)
        m[3, 2] = -1.0
        return m

    def view_projection(self) -> np.ndarray:
        return self.projection_matrix() @ self.view_matrix()


def sample_camera(rng: np.random.Generator, height: int = 128,
                  width: int = 128) -> Camera:
    """Random training pose: full azimuth circle, raised elevation band."""
    return Camera(azimuth=float(rng.uniform(*TRAIN_AZIMUTH)),
                  elevation=float(rng.uniform(*TRAIN_ELEVATION)),
                  radius=float(rng.uniform(*TRAIN_RADIUS)),
                  height=height, width=width)


def eval_cameras(height: int = 128, width: int = 128) -> list[Camera]:
    """Fixed 3 elevations x 5 azimuths evaluation grid."""
    return [Camera(azimuth=az, elevation=el, height=height, width=width)
            for el in EVAL_ELEVATIONS for az in EVAL_AZIMUTHS]
