"""Token transformer used by the geometry and texture fields."""
from __future__ import annotations

import math

import numpy as np

from ..autodiff import Tensor, ops


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 zero: bool = False, dtype=np.float32):
        if zero:
            w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            s = math.sqrt(6.0 / (d_in + d_out))
            w = rng.uniform(-s, s, size=(d_in, d_out)).astype(dtype)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.matmul(x, self.w) + self.b

    def parameters(self, prefix: str):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


class _LayerNorm:
    def __init__(self, dim: int, dtype=np.float32):
        self.gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)

    def parameters(self, prefix: str):
        return [(f"{prefix}.gain", self.gain), (f"{prefix}.bias", self.bias)]


class TransformerBlock:
    """Pre-norm single-head self-attention + MLP, residual connections."""

    def __init__(self, d_model: int, rng, mlp_ratio: int = 4, dtype=np.float32):
        self.d_model = d_model
        self.ln1 = _LayerNorm(d_model, dtype)
        self.wq = Linear(d_model, d_model, rng, dtype=dtype)
        self.wk = Linear(d_model, d_model, rng, dtype=dtype)
        self.wv = Linear(d_model, d_model, rng, dtype=dtype)
        self.wo = Linear(d_model, d_model, rng, dtype=dtype)
        self.ln2 = _LayerNorm(d_model, dtype)
        self.fc1 = Linear(d_model, d_model * mlp_ratio, rng, dtype=dtype)
        self.fc2 = Linear(d_model * mlp_ratio, d_model, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        # x: (chunks, chunk_len, d); attention stays within each chunk
        h = self.ln1(x)
        q, k, v = self.wq(h), self.wk(h), self.wv(h)
        scores = ops.matmul(q, ops.transpose(k)) * (1.0 / math.sqrt(self.d_model))
        att = ops.matmul(ops.softmax(scores), v)
        x = x + self.wo(att)
        x = x + self.fc2(self.fc1(self.ln2(x)).relu())
        return x

    def parameters(self, prefix: str):
        out = []
        for name, sub in (("ln1", self.ln1), ("wq", self.wq), ("wk", self.wk),
                          ("wv", self.wv), ("wo", self.wo), ("ln2", self.ln2),
                          ("fc1", self.fc1), ("fc2", self.fc2)):
            out.extend(sub.parameters(f"{prefix}.{name}"))
        return out


class TokenTransformer:
    """Embeds per-point tokens, runs chunked attention blocks, projects out.

    Attention is restricted to fixed-size chunks of the token sequence
    (no cross-chunk attention), which bounds the quadratic cost on large
    point sets. The output head can be zero-initialized so the module starts
    as an exact zero function (residual heads).
    """

    def __init__(self, token_dim: int, d_model: int, blocks: int, out_dim: int,
                 rng, chunk: int = 1024, zero_head: bool = True, dtype=np.float32):
        self.chunk = chunk
        self.d_model = d_model
        self.embed = Linear(token_dim, d_model, rng, dtype=dtype)
        self.blocks = [TransformerBlock(d_model, rng, dtype=dtype) for _ in range(blocks)]
        self.ln_f = _LayerNorm(d_model, dtype)
        self.head = Linear(d_model, out_dim, rng, zero=zero_head, dtype=dtype)
        self.dtype = dtype

    def __call__(self, tokens: Tensor) -> Tensor:
        n = tokens.shape[0]
        chunk = min(self.chunk, max(n, 1))
        pad = (-n) % chunk
        if pad:
            filler = Tensor(np.zeros((pad, tokens.shape[1]), dtype=tokens.dtype))
            tokens = ops.concat([tokens, filler], axis=0)
        x = self.embed(tokens)
        x = ops.reshape(x, ((n + pad) // chunk, chunk, self.d_model))
        for block in self.blocks:
            x = block(x)
        x = ops.reshape(x, (n + pad, self.d_model))
        out = self.head(self.ln_f(x))
        if pad:
            out = ops.gather(out, np.arange(n))
        return out

    def parameters(self, prefix: str):
        out = self.embed.parameters(f"{prefix}.embed")
        for i, block in enumerate(self.blocks):
            out.extend(block.parameters(f"{prefix}.block{i}"))
        out.extend(self.ln_f.parameters(f"{prefix}.ln_f"))
        out.extend(self.head.parameters(f"{prefix}.head"))
        return out
