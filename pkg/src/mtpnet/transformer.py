"""Canonical (post-norm) transformer encoder/decoder blocks over patch tokens."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .nn import Linear, Module, const_param, uniform_param
from .tensor import Tensor

POS_INIT_BOUND = 0.02


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
    return_weights: bool = False,
):
    """``softmax(q k^T / sqrt(d)) v`` over the last two axes. No mask."""
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key length {k.shape[-2]} != value length {v.shape[-2]}")
    kt = T.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    scores = T.scale(T.matmul(q, kt), 1.0 / math.sqrt(q.shape[-1]))
    weights = T.softmax(scores, axis=-1)
    out = T.matmul(T.dropout(weights, dropout, rng, training), v)
    return (out, weights) if return_weights else out


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = 1e-5, dtype=np.float64):
        self.gain = const_param(1.0, (width,), dtype)
        self.bias = const_param(0.0, (width,), dtype)
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self._eps)


class MultiHeadAttention(Module):
    """Per-head Q/K/V projections (packed as d_model x d_model), concat, output projection."""

    def __init__(self, d_model: int, heads: int, rng, dropout: float = 0.0, dtype=np.float64):
        if heads < 1 or d_model % heads:
            raise ValueError(f"{heads} heads do not divide d_model={d_model}")
        self._heads = heads
        self._dropout = dropout
        self._rng = rng
        self.q = Linear(d_model, d_model, rng, dtype=dtype)
        self.k = Linear(d_model, d_model, rng, dtype=dtype)
        self.v = Linear(d_model, d_model, rng, dtype=dtype)
        self.o = Linear(d_model, d_model, rng, dtype=dtype)

    @property
    def heads(self) -> int:
        return self._heads

    def _split(self, x: Tensor) -> Tensor:
        *lead, n, dm = x.shape
        k = len(lead)
        x = T.reshape(x, tuple(lead) + (n, self._heads, dm // self._heads))
        return T.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))

    def _merge(self, x: Tensor) -> Tensor:
        *lead, h, n, dk = x.shape
        k = len(lead)
        x = T.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))
        return T.reshape(x, tuple(lead) + (n, h * dk))

    def __call__(self, x_q: Tensor, x_kv: Tensor | None = None) -> Tensor:
        x_kv = x_q if x_kv is None else x_kv
        dm = self.q.weight.shape[0]
        if x_q.shape[-1] != dm or x_kv.shape[-1] != dm:
            raise ValueError(f"attention inputs {x_q.shape}, {x_kv.shape} do not have width {dm}")
        heads = scaled_dot_attention(
            self._split(self.q(x_q)),
            self._split(self.k(x_kv)),
            self._split(self.v(x_kv)),
            self._dropout,
            self._rng,
            self.training,
        )
        return self.o(self._merge(heads))


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng, dropout: float = 0.0, dtype=np.float64):
        if d_ff < 1:
            raise ValueError(f"d_ff must be >= 1, got {d_ff}")
        self.inner = Linear(d_model, d_ff, rng, dtype=dtype)
        self.outer = Linear(d_ff, d_model, rng, dtype=dtype)
        self._dropout = dropout
        self._rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        y = self.outer(T.gelu(self.inner(x)))
        return T.dropout(y, self._dropout, self._rng, self.training)


class EncoderBlock(Module):
    """``x' = LN(x + SelfAttn(x))``; ``out = LN(x' + FFN(x'))``."""

    def __init__(self, d_model: int, heads: int, d_ff: int | None, rng, dropout: float = 0.0, dtype=np.float64):
        d_ff = d_ff or 4 * d_model
        self.attn = MultiHeadAttention(d_model, heads, rng, dropout, dtype)
        self.ffn = FeedForward(d_model, d_ff, rng, dropout, dtype)
        self.norm1 = LayerNorm(d_model, dtype=dtype)
        self.norm2 = LayerNorm(d_model, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.ffn(x))


class DecoderBlock(Module):
    """Self-attention, cross-attention to ``memory``, then FFN; each residual + LN."""

    def __init__(self, d_model: int, heads: int, d_ff: int | None, rng, dropout: float = 0.0, dtype=np.float64):
        d_ff = d_ff or 4 * d_model
        self.self_attn = MultiHeadAttention(d_model, heads, rng, dropout, dtype)
        self.cross_attn = MultiHeadAttention(d_model, heads, rng, dropout, dtype)
        self.ffn = FeedForward(d_model, d_ff, rng, dropout, dtype)
        self.norm1 = LayerNorm(d_model, dtype=dtype)
        self.norm2 = LayerNorm(d_model, dtype=dtype)
        self.norm3 = LayerNorm(d_model, dtype=dtype)

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        if memory.shape[-1] != x.shape[-1]:
            raise ValueError(f"decoder width {x.shape[-1]} does not match memory width {memory.shape[-1]}")
        x = self.norm1(x + self.self_attn(x))
        x = self.norm2(x + self.cross_attn(x, memory))
        return self.norm3(x + self.ffn(x))


class PositionEmbedding(Module):
    """Learnable ``(c, N, p)`` offsets shared by every variable of one level."""

    def __init__(self, channels: int, n_patches: int, patch_size: int, rng, dtype=np.float64):
        self.weight = uniform_param(rng, (channels, n_patches, patch_size), POS_INIT_BOUND, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return add_position(x, self.weight)


def add_position(x: Tensor, pos: Tensor) -> Tensor:
    """Add ``pos`` (c, N, p) to every variable slice of ``x`` (..., c, N, p, D)."""
    if tuple(x.shape[-4:-1]) != tuple(pos.shape):
        raise ValueError(f"position embedding {pos.shape} does not match block {x.shape}")
    return x + T.reshape(pos, pos.shape + (1,))
