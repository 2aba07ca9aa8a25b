"""Score-distillation gradient assembly."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .providers import GuidanceError, GuidanceRequest, ScoreProvider
from .schedule import NoiseSchedule, sample_timestep


def cfg_mix(eps_cond: np.ndarray, eps_uncond: np.ndarray, scale: float) -> np.ndarray:
    """Classifier-free guidance: uncond + scale * (cond - uncond)."""
    eps_cond = np.asarray(eps_cond)
    eps_uncond = np.asarray(eps_uncond)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(f"shape mismatch {eps_cond.shape} vs {eps_uncond.shape}")
    return (eps_uncond + scale * (eps_cond - eps_uncond)).astype(np.float32)


@dataclass
class SDSSample:
    """Diagnostics from one score-distillation draw."""

    grad: np.ndarray
    t: int
    omega: float
    eps_norm: float
    residual_norm: float


def sds_grad(provider: ScoreProvider, z0: np.ndarray, rng: np.random.Generator,
             schedule: NoiseSchedule, stage: str, iteration: int, total: int,
             cond: GuidanceRequest | None = None) -> SDSSample:
    """One SDS draw: omega(t) * (eps_hat - eps), to inject as z0's cotangent.

    Samples t from the stage's annealing window and a fresh standard-normal
    eps, noises z0, and queries the provider. The provider output is treated
    as a constant: nothing here touches the autodiff graph. cond supplies the
    conditioning fields (its z_t/t placeholders are replaced per draw); None
    means an unconditioned request.
    """
    z0 = np.asarray(z0, dtype=np.float32)
    if not np.isfinite(z0).all():
        raise GuidanceError("z0 contains non-finite values")
    t = sample_timestep(iteration, total, stage, rng)
    eps = rng.standard_normal(z0.shape).astype(np.float32)
    z_t = schedule.add_noise(z0, t, eps)
    if cond is None:
        request = GuidanceRequest(z_t=z_t, t=t)
    else:
        request = replace(cond, z_t=z_t, t=t)

    eps_hat = provider.predict_noise(request)
    if provider.supports_uncond and request.cfg_scale != 1.0:
        eps_uncond = provider.predict_noise(request.unconditional())
        eps_hat = cfg_mix(eps_hat, eps_uncond, request.cfg_scale)

    eps_hat = np.asarray(eps_hat, dtype=np.float32)
    if eps_hat.shape != z0.shape:
        raise GuidanceError(f"provider returned shape {eps_hat.shape}, expected {z0.shape}")
    if not np.isfinite(eps_hat).all():
        bad = int((~np.isfinite(eps_hat)).sum())
        raise GuidanceError(f"provider returned {bad} non-finite values at t={t}")

    residual = eps_hat - eps
    omega = schedule.omega(t)
    grad = (omega * residual).astype(np.float32)
    return SDSSample(grad=grad, t=t, omega=omega,
                     eps_norm=float(np.linalg.norm(eps)),
                     residual_norm=float(np.linalg.norm(residual)))
