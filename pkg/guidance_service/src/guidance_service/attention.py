"""Attention blocks with low-rank domain adapters and multimodal conditioning.

Self-attention projections carry a frozen base weight plus a trainable
low-rank delta; cross-attention mixes a text term with identity and
expression terms under scalar weights. Both are built so a freshly
constructed model computes exactly what its base computes: low-rank deltas
start at zero, and the identity/expression value paths start at zero.
"""
from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

SELF_ATTENTION_RANK = 16
CROSS_ATTENTION_RANK = 32
COND_TOKENS = 4


class LoRALinear(nn.Module):
    """Frozen linear map plus a trainable low-rank update.

    y = x W^T + x A^T B^T with A Gaussian and B zero at init, so the delta
    vanishes until training moves B. The base weight never trains.
    """

    def __init__(self, d_in: int, d_out: int, rank: int, bias: bool = False):
        super().__init__()
        if rank > min(d_in, d_out):
            raise ValueError(f"rank {rank} exceeds min(d_in, d_out) = "
                             f"{min(d_in, d_out)}")
        self.base = nn.Linear(d_in, d_out, bias=bias)
        self.base.weight.requires_grad_(False)
        if bias:
            self.base.bias.requires_grad_(False)
        self.lora_a = nn.Parameter(0.02 * torch.randn(rank, d_in))
        self.lora_b = nn.Parameter(torch.zeros(d_out, rank))

    def forward(self, x: torch.Tensor, adapters: bool = True) -> torch.Tensor:
        y = self.base(x)
        if adapters:
            y = y + F.linear(F.linear(x, self.lora_a), self.lora_b)
        return y


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Single-head scaled dot-product attention over token sequences."""
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    return torch.softmax(scores, dim=-1) @ v


def _zero_init(linear: nn.Linear) -> nn.Linear:
    nn.init.zeros_(linear.weight)
    nn.init.zeros_(linear.bias)
    return linear


class LoRASelfAttention(nn.Module):
    """Residual self-attention over spatial tokens with adapted Q/K/V."""

    def __init__(self, channels: int, rank: int = SELF_ATTENTION_RANK):
        super().__init__()
        self.norm = nn.GroupNorm(8, channels)
        self.q = LoRALinear(channels, channels, rank)
        self.k = LoRALinear(channels, channels, rank)
        self.v = LoRALinear(channels, channels, rank)
        self.out = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor, adapters: bool = True) -> torch.Tensor:
        b, c, h, w = x.shape
        tokens = self.norm(x).flatten(2).transpose(1, 2)
        z = attention(self.q(tokens, adapters), self.k(tokens, adapters),
                      self.v(tokens, adapters))
        return x + self.out(z).transpose(1, 2).reshape(b, c, h, w)


class MultimodalCrossAttention(nn.Module):
    """Residual cross-attention mixing text, identity, and expression terms.

    The text term attends over caption tokens through adapted projections.
    Identity and expression embeddings each project (with bias) to a few
    key/value tokens and contribute through their own attention terms,
    scaled by lambda_id and lambda_exp. Value projections start at zero, so
    the extra terms vanish at init regardless of the lambdas; key biases are
    random, so even a zero embedding vector produces keys that attend.
    """

    def __init__(self, channels: int, ctx_dim: int, id_dim: int, exp_dim: int,
                 rank: int = CROSS_ATTENTION_RANK, tokens: int = COND_TOKENS):
        super().__init__()
        self.tokens = tokens
        self.norm = nn.GroupNorm(8, channels)
        self.q = LoRALinear(channels, channels, rank)
        self.k_text = LoRALinear(ctx_dim, channels, rank)
        self.v_text = LoRALinear(ctx_dim, channels, rank)
        self.k_id = nn.Linear(id_dim, tokens * channels)
        self.v_id = _zero_init(nn.Linear(id_dim, tokens * channels))
        self.k_exp = nn.Linear(exp_dim, tokens * channels)
        self.v_exp = _zero_init(nn.Linear(exp_dim, tokens * channels))
        self.out = nn.Linear(channels, channels)

    def _cond_term(self, q, emb, k_proj, v_proj):
        b = q.shape[0]
        k = k_proj(emb).view(b, self.tokens, -1)
        v = v_proj(emb).view(b, self.tokens, -1)
        return attention(q, k, v)

    def forward(self, x: torch.Tensor, text: torch.Tensor, y_id: torch.Tensor,
                y_exp: torch.Tensor, lambda_id: float = 1.0,
                lambda_exp: float = 1.0, adapters: bool = True) -> torch.Tensor:
        b, c, h, w = x.shape
        tokens = self.norm(x).flatten(2).transpose(1, 2)
        q = self.q(tokens, adapters)
        z = attention(q, self.k_text(text, adapters),
                      self.v_text(text, adapters))
        if adapters and lambda_id != 0.0:
            z = z + lambda_id * self._cond_term(q, y_id, self.k_id, self.v_id)
        if adapters and lambda_exp != 0.0:
            z = z + lambda_exp * self._cond_term(q, y_exp, self.k_exp,
                                                 self.v_exp)
        return x + self.out(z).transpose(1, 2).reshape(b, c, h, w)
