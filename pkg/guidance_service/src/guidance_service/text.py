"""Bag-of-words caption encoder: hashed tokens over a frozen embedding table."""
from __future__ import annotations

import zlib

import torch
from torch import nn

VOCAB_SIZE = 4096
CTX_DIM = 64
MAX_TOKENS = 16


class TextEncoder(nn.Module):
    """Maps captions to fixed-length token embedding sequences.

    Words hash into a seeded, frozen table; row 0 is the padding vector
    (zeros), so an empty caption encodes as all-zero context, which serves
    as the unconditional input for classifier-free guidance.
    """

    def __init__(self, vocab_size: int = VOCAB_SIZE, dim: int = CTX_DIM,
                 max_tokens: int = MAX_TOKENS, seed: int = 0):
        super().__init__()
        self.vocab_size = vocab_size
        self.dim = dim
        self.max_tokens = max_tokens
        gen = torch.Generator().manual_seed(seed)
        table = 0.02 * torch.randn(vocab_size + 1, dim, generator=gen)
        table[0] = 0.0
        self.register_buffer("table", table)

    def token_ids(self, caption: str) -> list[int]:
        words = caption.lower().split()
        ids = [1 + zlib.crc32(w.encode("utf-8")) % self.vocab_size
               for w in words[:self.max_tokens]]
        return ids + [0] * (self.max_tokens - len(ids))

    def forward(self, captions: list[str]) -> torch.Tensor:
        ids = torch.tensor([self.token_ids(c) for c in captions],
                           dtype=torch.long)
        return self.table[ids]
