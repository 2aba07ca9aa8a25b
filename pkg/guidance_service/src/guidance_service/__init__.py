"""Toy conditional diffusion guidance server.

A small UNet noise predictor with LoRA-adapted self-attention and multimodal
(text + identity + expression) cross-attention, trained on synthetic head
renders and served over the same wire protocol the optimization CLI speaks.
"""
from .attention import LoRALinear, LoRASelfAttention, MultimodalCrossAttention, attention
from .data import DataError, HeadRenderDataset, TrainSample, compose_caption, read_pfm
from .schedule import BETA_END, BETA_START, T_MAX, NoiseSchedule
from .serve import load_model, make_app
from .text import TextEncoder
from .training import (
    TrainConfig,
    base_hash,
    load_checkpoint,
    save_checkpoint,
    smoothed_decrease,
    train,
)
from .unet import Conditioning, ToyUNet, UNetConfig

__version__ = "0.1.0"

__all__ = [
    "attention",
    "base_hash",
    "BETA_END",
    "BETA_START",
    "compose_caption",
    "Conditioning",
    "DataError",
    "HeadRenderDataset",
    "load_checkpoint",
    "load_model",
    "LoRALinear",
    "LoRASelfAttention",
    "make_app",
    "MultimodalCrossAttention",
    "NoiseSchedule",
    "read_pfm",
    "save_checkpoint",
    "smoothed_decrease",
    "T_MAX",
    "TextEncoder",
    "ToyUNet",
    "train",
    "TrainConfig",
    "TrainSample",
    "UNetConfig",
]
