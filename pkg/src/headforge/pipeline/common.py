"""Shared machinery for the optimization stage loops."""
from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from ..guidance import GuidanceRequest
from ..optim import Adam
from .checkpoint import RunState, rng_state_of
from .config import RunConfig
from .errors import PipelineError


@dataclass
class StageReport:
    """What a stage loop produced, for callers and tests."""

    stage: str
    iterations: int
    losses: list = dataclass_field(default_factory=list)
    laplacians: list = dataclass_field(default_factory=list)
    timesteps: list = dataclass_field(default_factory=list)
    phases: list = dataclass_field(default_factory=list)
    shaded_flags: list = dataclass_field(default_factory=list)
    param_hash: str = ""
    empty_extractions: int = 0
    counters: dict = dataclass_field(default_factory=dict)
    checkpoint_path: str | None = None
    seconds: float = 0.0


def make_optimizer(params, config: RunConfig, lr: float) -> Adam:
    return Adam(params, lr=lr, beta1=config["stage.adam.beta1"],
                beta2=config["stage.adam.beta2"], eps=config["stage.adam.eps"])


def conditioning_template(config: RunConfig) -> GuidanceRequest:
    """Conditioning carried into every score query; z_t/t are placeholders
    replaced per draw."""
    return GuidanceRequest(
        z_t=np.zeros((1, 1, 3), np.float32), t=1,
        y_text=config["guidance.y_text"],
        lambda_id=config["guidance.lambda_id"],
        lambda_exp=config["guidance.lambda_exp"],
        cfg_scale=config["guidance.cfg_scale"],
    )


def restore_into(params, optimizer: Adam | None, state: RunState):
    """Load checkpointed parameter and optimizer arrays into live tensors.

    With optimizer=None only parameters are restored (for loading a trained
    model without continuing its optimization); otherwise any stored
    optimizer arrays are loaded too.
    """
    named = dict(params)
    opt_state = {}
    for name, arr in state.arrays.items():
        if name.startswith("adam."):
            opt_state[name[len("adam."):]] = arr
        elif name not in named:
            raise PipelineError(f"checkpoint parameter {name} not in model")
        elif named[name].data.shape != arr.shape:
            raise PipelineError(
                f"checkpoint parameter {name} has shape {arr.shape}, "
                f"model expects {named[name].data.shape}")
        else:
            named[name].data = arr.copy()
    if opt_state and optimizer is not None:
        optimizer.load_state_dict(opt_state)


def capture_state(stage: str, iteration: int, config: RunConfig,
                  params, optimizer: Adam, rng, counters: dict) -> RunState:
    arrays = {name: t.data for name, t in params}
    for key, arr in optimizer.state_dict().items():
        arrays[f"adam.{key}"] = arr
    return RunState(stage=stage, iteration=iteration, config=config.as_dict(),
                    rng_state=rng_state_of(rng), arrays=arrays,
                    counters=dict(counters))


def first_nonfinite_param(params) -> str | None:
    for name, t in params:
        if not np.isfinite(t.data).all():
            return name
    return None
