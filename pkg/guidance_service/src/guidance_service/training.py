"""Adapter training: noise-prediction MSE with the base network frozen.

Each step draws samples with replacement, noises them at uniform random
timesteps, and regresses the injected noise. Only adapter parameters
receive updates; a hash over the base parameters certifies they never move.
An optional warmup phase pretrains the base unconditionally before it is
frozen, standing in for a pretrained backbone.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch
from torch.nn import functional as F

from .data import HeadRenderDataset
from .schedule import NoiseSchedule
from .text import TextEncoder
from .unet import Conditioning, ToyUNet, UNetConfig

CHECKPOINT_KIND = "guidance-unet"


@dataclass
class TrainConfig:
    domain: str = "normal"
    steps: int = 500
    batch_size: int = 4
    lr: float = 2e-3
    seed: int = 0
    lambda_id: float = 1.0
    lambda_exp: float = 1.0
    pretrain_steps: int = 0
    pretrain_lr: float = 1e-3
    log_every: int = 50
    unet: UNetConfig = field(default_factory=UNetConfig)


@dataclass
class TrainReport:
    losses: list
    skipped: int
    base_hash: str
    parameter_report: dict
    model: ToyUNet


def base_hash(model: ToyUNet) -> str:
    """Order-stable digest of every base parameter's float32 bytes."""
    digest = hashlib.sha256()
    for name, p in sorted(model.base_parameters()):
        digest.update(name.encode())
        digest.update(p.detach().numpy().astype("<f4").tobytes())
    return digest.hexdigest()[:16]


def save_checkpoint(path, model: ToyUNet, domain: str,
                    schedule: NoiseSchedule, extra: dict | None = None):
    payload = {
        "kind": CHECKPOINT_KIND,
        "domain": domain,
        "space": "pixel",
        "schedule": schedule.constants(),
        "unet": model.config.to_dict(),
        "state": model.state_dict(),
        "base_hash": base_hash(model),
    }
    payload.update(extra or {})
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[ToyUNet, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("kind") != CHECKPOINT_KIND:
        raise ValueError(f"{path} is not a {CHECKPOINT_KIND} checkpoint")
    model = ToyUNet(UNetConfig.from_dict(payload["unet"]))
    model.load_state_dict(payload["state"])
    model.eval()
    meta = {k: v for k, v in payload.items() if k != "state"}
    return model, meta


def _training_step(model, batch, encoder, schedule, generator, config):
    images = batch["image"]
    b = images.shape[0]
    t = torch.randint(1, schedule.t_max + 1, (b,), generator=generator)
    eps = torch.randn(images.shape, generator=generator)
    z_t = schedule.add_noise(images, t, eps)
    cond = Conditioning(text=encoder(batch["caption"]), y_id=batch["y_id"],
                        y_exp=batch["y_exp"], lambda_id=config.lambda_id,
                        lambda_exp=config.lambda_exp)
    pred = model(z_t, t, cond)
    return F.mse_loss(pred, eps)


def train(dataset: HeadRenderDataset, config: TrainConfig,
          out_path=None) -> TrainReport:
    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed + 1)
    model = ToyUNet(config.unet)
    encoder = TextEncoder(dim=config.unet.ctx_dim)
    schedule = NoiseSchedule()

    if config.pretrain_steps > 0:
        warm = torch.optim.Adam(
            [p for _, p in model.base_parameters()], lr=config.pretrain_lr)
        uncond = Conditioning(text=encoder([""] * config.batch_size),
                              y_id=torch.zeros(config.batch_size,
                                               config.unet.id_dim),
                              y_exp=torch.zeros(config.batch_size,
                                                config.unet.exp_dim))
        for _ in range(config.pretrain_steps):
            idx = torch.randint(len(dataset), (config.batch_size,),
                                generator=generator)
            batch = dataset.batch(idx)
            t = torch.randint(1, schedule.t_max + 1, (config.batch_size,),
                              generator=generator)
            eps = torch.randn(batch["image"].shape, generator=generator)
            z_t = schedule.add_noise(batch["image"], t, eps)
            loss = F.mse_loss(model(z_t, t, uncond, adapters=False), eps)
            warm.zero_grad()
            loss.backward()
            warm.step()

    model.freeze_base()
    frozen = base_hash(model)
    optimizer = torch.optim.Adam(
        [p for _, p in model.adapter_parameters()], lr=config.lr)

    losses = []
    skipped = 0
    for step in range(config.steps):
        idx = torch.randint(len(dataset), (config.batch_size,),
                            generator=generator)
        loss = _training_step(model, dataset.batch(idx), encoder, schedule,
                              generator, config)
        if not torch.isfinite(loss):
            skipped += 1
            losses.append(float("nan"))
            continue
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())

    model.eval()
    after = base_hash(model)
    if after != frozen:
        raise RuntimeError("base parameters changed during adapter training")
    report = TrainReport(losses=losses, skipped=skipped, base_hash=after,
                         parameter_report=model.parameter_report(),
                         model=model)
    if out_path is not None:
        save_checkpoint(out_path, model, dataset.domain, schedule,
                        extra={"train": {"steps": config.steps,
                                         "batch_size": config.batch_size,
                                         "lr": config.lr,
                                         "seed": config.seed,
                                         "skipped": skipped}})
    return report


def smoothed_decrease(losses, window: int = 50) -> bool:
    """Mean of the last window is below the mean of the first window."""
    arr = np.asarray([x for x in losses if np.isfinite(x)], dtype=np.float64)
    if len(arr) < 2 * window:
        raise ValueError(f"need at least {2 * window} finite losses")
    return float(arr[-window:].mean()) < float(arr[:window].mean())
