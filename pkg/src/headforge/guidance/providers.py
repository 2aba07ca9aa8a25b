"""Noise-prediction providers: analytic oracle, zero mock, remote client."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .schedule import NoiseSchedule
from .wire import probe_health, remote_predict

ID_EMBED_DIM = 512


class GuidanceError(RuntimeError):
    pass


@dataclass
class GuidanceRequest:
    """One noise-prediction query.

    z_t is channel-last (H, W, C) float32; y_exp is either an integer
    codebook index or an embedding vector.
    """

    z_t: np.ndarray
    t: int
    y_text: str = ""
    y_id: np.ndarray = field(default_factory=lambda: np.zeros(ID_EMBED_DIM, np.float32))
    y_exp: object = 0
    lambda_id: float = 0.0
    lambda_exp: float = 0.0
    cfg_scale: float = 1.0
    space: str = "pixel"

    def __post_init__(self):
        self.z_t = np.asarray(self.z_t, dtype=np.float32)
        if self.z_t.ndim != 3:
            raise ValueError(f"z_t must be (H, W, C), got {self.z_t.shape}")
        self.y_id = np.asarray(self.y_id, dtype=np.float32)
        if self.y_id.shape != (ID_EMBED_DIM,):
            raise ValueError(f"y_id must have shape ({ID_EMBED_DIM},), got {self.y_id.shape}")
        if not np.isfinite(self.y_id).all():
            raise ValueError("y_id must be finite")
        if not isinstance(self.y_exp, (int, np.integer)):
            self.y_exp = np.asarray(self.y_exp, dtype=np.float32)
            if not np.isfinite(self.y_exp).all():
                raise ValueError("y_exp embedding must be finite")
        if self.lambda_id < 0 or self.lambda_exp < 0:
            raise ValueError("lambda weights must be non-negative")

    def unconditional(self) -> "GuidanceRequest":
        """Copy with all conditioning zeroed (for classifier-free guidance)."""
        y_exp = 0 if isinstance(self.y_exp, (int, np.integer)) else np.zeros_like(self.y_exp)
        return replace(self, y_text="", y_id=np.zeros(ID_EMBED_DIM, np.float32),
                       y_exp=y_exp, lambda_id=0.0, lambda_exp=0.0)


class ScoreProvider:
    """Interface: predict_noise(request) -> eps_hat with z_t's shape."""

    supports_uncond: bool = False
    context: dict = {}

    def on_context(self, info: dict) -> None:
        """Optimization-loop hook: camera/light/expression for this draw.

        Stored so callable targets (and logging wrappers) can depend on the
        render setup, which the wire request itself does not carry.
        """
        self.context = dict(info)

    def predict_noise(self, request: GuidanceRequest) -> np.ndarray:
        raise NotImplementedError


class ZeroProvider(ScoreProvider):
    """Predicts zero noise everywhere; useful as a wiring mock."""

    def predict_noise(self, request: GuidanceRequest) -> np.ndarray:
        return np.zeros_like(request.z_t)


class AnalyticTargetProvider(ScoreProvider):
    """Closed-form score for a Gaussian centered on a target mean image.

    eps_hat = (z_t - sqrt(abar_t) mu) / sqrt(1 - abar_t). target is either a
    fixed (H, W, C) image or a callable request -> image, letting callers
    swap per-view targets.
    """

    def __init__(self, target, schedule: NoiseSchedule):
        self.target = target
        self.schedule = schedule

    def _mu(self, request: GuidanceRequest) -> np.ndarray:
        mu = self.target(request) if callable(self.target) else self.target
        mu = np.asarray(mu, dtype=np.float32)
        if mu.shape != request.z_t.shape:
            raise GuidanceError(f"target shape {mu.shape} != z_t shape {request.z_t.shape}")
        return mu

    def predict_noise(self, request: GuidanceRequest) -> np.ndarray:
        ab = self.schedule.alpha_bar(request.t)
        mu = self._mu(request)
        # Round the scaled mean to float32 the same way forward noising
        # rounds z_t, so a z_t built from mu with zero noise maps back to
        # exactly zero predicted noise.
        scaled = (np.sqrt(ab) * mu).astype(np.float32)
        diff = request.z_t.astype(np.float64) - scaled.astype(np.float64)
        return (diff / np.sqrt(1.0 - ab)).astype(np.float32)


class RemoteProvider(ScoreProvider):
    """Wire-protocol client; the server applies its own conditioning/CFG."""

    supports_uncond = False

    def __init__(self, endpoint: str, probe: bool = True, retries: int = 3,
                 timeout: float = 30.0):
        self.endpoint = endpoint
        self.retries = retries
        self.timeout = timeout
        self.health = probe_health(endpoint) if probe else None

    def predict_noise(self, request: GuidanceRequest) -> np.ndarray:
        return remote_predict(self.endpoint, request, retries=self.retries,
                              timeout=self.timeout)
