"""A small conditional UNet noise predictor.

Three encoder/decoder scales below a strided stem; each scale runs one
residual block, one adapted self-attention, and one multimodal
cross-attention on the encoder path. The decoder consumes skip connections
and returns a prediction at the input shape. Base parameters (convolutions,
norms, attention base projections) are meant to be frozen for adapter
training; adapter parameters are the low-rank deltas, the identity and
expression projections, and the expression label table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .attention import (
    COND_TOKENS,
    CROSS_ATTENTION_RANK,
    SELF_ATTENTION_RANK,
    LoRALinear,
    LoRASelfAttention,
    MultimodalCrossAttention,
)
from .text import CTX_DIM

ID_DIM = 512
EXP_DIM = 32
EXP_LABELS = 23

ADAPTER_MARKERS = ("lora_a", "lora_b", "k_id", "v_id", "k_exp", "v_exp",
                   "exp_table")


@dataclass
class UNetConfig:
    widths: tuple = (32, 64, 128)
    in_channels: int = 3
    time_dim: int = 128
    ctx_dim: int = CTX_DIM
    id_dim: int = ID_DIM
    exp_dim: int = EXP_DIM
    exp_labels: int = EXP_LABELS
    rank_self: int = SELF_ATTENTION_RANK
    rank_cross: int = CROSS_ATTENTION_RANK
    cond_tokens: int = COND_TOKENS

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "in_channels": self.in_channels,
                "time_dim": self.time_dim, "ctx_dim": self.ctx_dim,
                "id_dim": self.id_dim, "exp_dim": self.exp_dim,
                "exp_labels": self.exp_labels, "rank_self": self.rank_self,
                "rank_cross": self.rank_cross,
                "cond_tokens": self.cond_tokens}

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


@dataclass
class Conditioning:
    """Per-batch conditioning for one forward pass."""

    text: torch.Tensor
    y_id: torch.Tensor
    y_exp: torch.Tensor
    lambda_id: float = 1.0
    lambda_exp: float = 1.0


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard transformer position encoding of integer timesteps."""
    half = dim // 2
    freqs = torch.exp(-math.log(10_000.0) *
                      torch.arange(half, dtype=torch.float32) / (half - 1))
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, c_out)
        self.norm2 = nn.GroupNorm(8, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = (nn.Conv2d(c_in, c_out, 1) if c_in != c_out
                     else nn.Identity())

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class ToyUNet(nn.Module):
    def __init__(self, config: UNetConfig | None = None):
        super().__init__()
        cfg = config or UNetConfig()
        self.config = cfg
        w = list(cfg.widths)
        if len(w) != 3:
            raise ValueError(f"expected 3 scale widths, got {w}")
        td = cfg.time_dim

        self.time_mlp = nn.Sequential(
            nn.Linear(td // 2, td), nn.SiLU(), nn.Linear(td, td))
        self.exp_table = nn.Embedding(cfg.exp_labels, cfg.exp_dim)

        self.conv_in = nn.Conv2d(cfg.in_channels, w[0], 3, padding=1)
        self.stem_down = nn.Conv2d(w[0], w[0], 3, stride=2, padding=1)

        def attn_pair(c):
            return (LoRASelfAttention(c, cfg.rank_self),
                    MultimodalCrossAttention(c, cfg.ctx_dim, cfg.id_dim,
                                             cfg.exp_dim, cfg.rank_cross,
                                             cfg.cond_tokens))

        self.enc_res = nn.ModuleList()
        self.enc_self = nn.ModuleList()
        self.enc_cross = nn.ModuleList()
        self.downs = nn.ModuleList()
        c_prev = w[0]
        for i, c in enumerate(w):
            self.enc_res.append(ResBlock(c_prev, c, td))
            sa, ca = attn_pair(c)
            self.enc_self.append(sa)
            self.enc_cross.append(ca)
            if i < 2:
                self.downs.append(
                    nn.Conv2d(c, w[i + 1], 3, stride=2, padding=1))
            c_prev = w[i + 1] if i < 2 else c

        self.middle = ResBlock(w[2], w[2], td)

        self.ups = nn.ModuleList([
            nn.ConvTranspose2d(w[2], w[1], 2, stride=2),
            nn.ConvTranspose2d(w[1], w[0], 2, stride=2),
        ])
        self.dec_res = nn.ModuleList([
            ResBlock(w[1] * 2, w[1], td),
            ResBlock(w[0] * 2, w[0], td),
        ])
        self.stem_up = nn.ConvTranspose2d(w[0], w[0], 2, stride=2)
        self.norm_out = nn.GroupNorm(8, w[0])
        self.conv_out = nn.Conv2d(w[0], cfg.in_channels, 3, padding=1)

    def resolve_exp(self, y_exp: torch.Tensor) -> torch.Tensor:
        """Label indices become table rows; embeddings pass through."""
        if not y_exp.dtype.is_floating_point:
            if torch.any(y_exp < 0) or torch.any(y_exp >= self.config.exp_labels):
                raise ValueError(f"expression label outside "
                                 f"[0, {self.config.exp_labels})")
            return self.exp_table(y_exp.long())
        if y_exp.shape[-1] != self.config.exp_dim:
            raise ValueError(f"expression embedding must have dim "
                             f"{self.config.exp_dim}, got {y_exp.shape[-1]}")
        return y_exp

    def forward(self, z_t: torch.Tensor, t: torch.Tensor, cond: Conditioning,
                adapters: bool = True) -> torch.Tensor:
        t = torch.as_tensor(t)
        if t.dim() == 0:
            t = t[None]
        temb = self.time_mlp(
            sinusoidal_embedding(t, self.config.time_dim // 2))
        y_exp = self.resolve_exp(cond.y_exp) if adapters else cond.y_exp

        h = self.stem_down(F.silu(self.conv_in(z_t)))
        skips = []
        for i in range(3):
            h = self.enc_res[i](h, temb)
            h = self.enc_self[i](h, adapters)
            h = self.enc_cross[i](h, cond.text, cond.y_id, y_exp,
                                  cond.lambda_id, cond.lambda_exp, adapters)
            if i < 2:
                skips.append(h)
                h = self.downs[i](h)
        h = self.middle(h, temb)
        for i in range(2):
            h = self.ups[i](h)
            h = self.dec_res[i](torch.cat([h, skips[1 - i]], dim=1), temb)
        h = self.stem_up(h)
        return self.conv_out(F.silu(self.norm_out(h)))

    # ---------------------------------------------------- parameter classes

    def adapter_parameters(self):
        return [(n, p) for n, p in self.named_parameters()
                if any(m in n for m in ADAPTER_MARKERS)]

    def base_parameters(self):
        return [(n, p) for n, p in self.named_parameters()
                if not any(m in n for m in ADAPTER_MARKERS)]

    def freeze_base(self):
        for _, p in self.base_parameters():
            p.requires_grad_(False)

    def parameter_report(self) -> dict:
        base = sum(p.numel() for _, p in self.base_parameters())
        adapters = sum(p.numel() for _, p in self.adapter_parameters())
        return {"base": base, "adapters": adapters,
                "fraction": adapters / (base + adapters)}
