"""DDPM noise schedule, forward noising, and stage-aware timestep sampling."""
from __future__ import annotations

import numpy as np

T_MAX = 1000
BETA_START = 1e-4
BETA_END = 2e-2

STAGE_RANGES = {
    "texture_diffuse": (50, 900),
    "texture_pbr": (50, 500),
    "texture_refine": (50, 100),
}
GEOMETRY_EARLY = (200, 700)
GEOMETRY_LATE = (50, 200)

OMEGA_MODES = ("one_minus_alpha_bar", "constant")


class NoiseSchedule:
    """Linear-beta DDPM schedule with precomputed cumulative products.

    Timesteps are 1-based: t in [1, T_MAX]. alpha_bar(1) = 1 - 1e-4 exactly.
    """

    def __init__(self, t_max: int = T_MAX, beta_start: float = BETA_START,
                 beta_end: float = BETA_END, omega_mode: str = "one_minus_alpha_bar"):
        if omega_mode not in OMEGA_MODES:
            raise ValueError(f"omega_mode must be one of {OMEGA_MODES}, got {omega_mode!r}")
        self.t_max = int(t_max)
        self.betas = np.linspace(beta_start, beta_end, self.t_max, dtype=np.float64)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        self.omega_mode = omega_mode

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.t_max:
            raise ValueError(f"timestep {t} outside [1, {self.t_max}]")
        return t

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[self._check_t(t) - 1])

    def omega(self, t: int) -> float:
        if self.omega_mode == "constant":
            self._check_t(t)
            return 1.0
        return 1.0 - self.alpha_bar(t)

    def add_noise(self, z0: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
        """Forward diffusion: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
        ab = self.alpha_bar(t)
        z0 = np.asarray(z0, dtype=np.float32)
        eps = np.asarray(eps, dtype=np.float32)
        if eps.shape != z0.shape:
            raise ValueError(f"noise shape {eps.shape} != image shape {z0.shape}")
        return (np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps).astype(np.float32)


def stage_range(stage: str, iteration: int, total: int) -> tuple[int, int]:
    if not 0 <= iteration < total:
        raise ValueError(f"iteration {iteration} outside [0, {total})")
    if stage == "geometry":
        return GEOMETRY_EARLY if iteration < total / 2 else GEOMETRY_LATE
    if stage in STAGE_RANGES:
        return STAGE_RANGES[stage]
    raise ValueError(f"unknown stage {stage!r}")


def sample_timestep(iteration: int, total: int, stage: str,
                    rng: np.random.Generator) -> int:
    """Uniform integer timestep from the stage's annealing window."""
    lo, hi = stage_range(stage, iteration, total)
    return int(rng.integers(lo, hi + 1))
