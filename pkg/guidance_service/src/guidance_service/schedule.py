"""DDPM noise schedule matching the optimization client's constants."""
from __future__ import annotations

import torch

T_MAX = 1000
BETA_START = 1e-4
BETA_END = 2e-2


class NoiseSchedule:
    """Linear-beta schedule with 1-based timesteps: t in [1, T_MAX]."""

    def __init__(self, t_max: int = T_MAX, beta_start: float = BETA_START,
                 beta_end: float = BETA_END):
        self.t_max = int(t_max)
        self.beta_start = float(beta_start)
        self.beta_end = float(beta_end)
        betas = torch.linspace(beta_start, beta_end, self.t_max,
                               dtype=torch.float64)
        self.alpha_bars = torch.cumprod(1.0 - betas, dim=0)

    def alpha_bar(self, t: int) -> float:
        t = int(t)
        if not 1 <= t <= self.t_max:
            raise ValueError(f"timestep {t} outside [1, {self.t_max}]")
        return float(self.alpha_bars[t - 1])

    def add_noise(self, z0: torch.Tensor, t: torch.Tensor,
                  eps: torch.Tensor) -> torch.Tensor:
        """z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, per batch element."""
        if eps.shape != z0.shape:
            raise ValueError(f"noise shape {tuple(eps.shape)} != image shape "
                             f"{tuple(z0.shape)}")
        t = torch.as_tensor(t, dtype=torch.long)
        if torch.any(t < 1) or torch.any(t > self.t_max):
            raise ValueError(f"timesteps outside [1, {self.t_max}]")
        ab = self.alpha_bars[t - 1].to(z0.dtype)
        while ab.dim() < z0.dim():
            ab = ab.unsqueeze(-1)
        return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps

    def constants(self) -> dict:
        return {"t_max": self.t_max, "beta_start": self.beta_start,
                "beta_end": self.beta_end}
