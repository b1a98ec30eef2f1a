"""Dimension-invariant embedding, patching, and the spatial/temporal variants.

Latent blocks use the layout ``(..., c, N, p, D)``: feature maps, patches,
steps within a patch, variables. Padding for patching goes on the left
(earliest steps) so the final steps of a series always fill the final patch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Module, fan_in_param
from .tensor import Tensor

EMBEDDING_MODES = ("di", "spatial", "temporal")


@dataclass
class PatchedEmbedding:
    values: Tensor  # (..., c, N, p, D)
    patch_size: int
    n_patches: int
    pad_len: int


def n_patches(length: int, p: int) -> int:
    return math.ceil(length / p)


def di_embed(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """3x1 convolution lifting ``(..., 1, T, D)`` to ``(..., c, T, D)``.

    Zero padding of one step on the time axis and none across variables, so
    neither dimension changes and variables never mix.
    """
    if kernel.shape[1:] != (1, 3, 1):
        raise ValueError(f"DI kernel must be (c, 1, 3, 1), got {kernel.shape}")
    return T.conv2d(x, kernel, bias, pad=(1, 0))


def patch(x: Tensor, p: int) -> PatchedEmbedding:
    """Split ``(..., c, T, D)`` into ``ceil(T/p)`` non-overlapping patches of ``p`` steps."""
    if p < 1:
        raise ValueError(f"patch size must be >= 1, got {p}")
    length = x.shape[-2]
    n = n_patches(length, p)
    pad_len = n * p - length
    if pad_len:
        widths = [(0, 0)] * x.ndim
        widths[-2] = (pad_len, 0)
        x = T.pad(x, widths)
    lead = x.shape[:-2]
    values = T.reshape(x, lead[:-1] + (lead[-1], n, p, x.shape[-1]))
    return PatchedEmbedding(values, p, n, pad_len)


def inverse_patch(e: PatchedEmbedding | Tensor) -> Tensor:
    """Concatenate patches back along time: ``(..., c, N, p, D) -> (..., c, N*p, D)``."""
    v = e.values if isinstance(e, PatchedEmbedding) else e
    *lead, n, p, d = v.shape
    return T.reshape(v, tuple(lead) + (n * p, d))


def spatial_embed(x: Tensor, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Project each step's D variables to c features: ``(..., I, D) -> (..., I, c)``."""
    y = T.matmul(x, weights)
    return y + bias if bias is not None else y


def temporal_embed(x: Tensor, p: int, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Project each variable's patches of ``p`` steps to c features.

    ``(..., I, D) -> (..., N, c, D)``, left zero padding to a multiple of ``p``.
    """
    if weights.shape[0] != p:
        raise ValueError(f"temporal weights need {p} rows, got {weights.shape}")
    length, d = x.shape[-2:]
    n = n_patches(length, p)
    pad_len = n * p - length
    if pad_len:
        widths = [(0, 0)] * x.ndim
        widths[-2] = (pad_len, 0)
        x = T.pad(x, widths)
    lead = x.shape[:-2]
    k = len(lead)
    blocks = T.reshape(x, lead + (n, p, d))
    blocks = T.transpose(blocks, tuple(range(k)) + (k, k + 2, k + 1))  # (..., N, D, p)
    y = T.matmul(blocks, weights)  # (..., N, D, c)
    if bias is not None:
        y = y + bias
    return T.transpose(y, tuple(range(k)) + (k, k + 2, k + 1))


class Embedding(Module):
    """Per-level input embedding; ``mode`` picks DI, spatial or temporal.

    Every mode returns a :class:`PatchedEmbedding` in the shared latent layout
    so the pyramid is agnostic to the choice. Spatial mode collapses the
    variables into a single latent series (``D' = 1``); temporal mode tiles
    each patch's c-vector over the patch's ``p`` positions.
    """

    def __init__(self, mode: str, channels: int, n_vars: int, patch_size: int, rng, dtype=np.float64):
        if mode not in EMBEDDING_MODES:
            raise ValueError(f"embedding mode must be one of {EMBEDDING_MODES}, got {mode!r}")
        self._mode = mode
        self._p = patch_size
        c = channels
        if mode == "di":
            self.kernel = fan_in_param(rng, (c, 1, 3, 1), 3, dtype)
            self.bias = fan_in_param(rng, (c,), 3, dtype)
        elif mode == "spatial":
            self.weight = fan_in_param(rng, (n_vars, c), n_vars, dtype)
            self.bias = fan_in_param(rng, (c,), n_vars, dtype)
        else:
            self.weight = fan_in_param(rng, (patch_size, c), patch_size, dtype)
            self.bias = fan_in_param(rng, (c,), patch_size, dtype)

    @property
    def mode(self) -> str:
        return self._mode

    def _require(self, mode: str):
        if self._mode != mode:
            raise ValueError(f"embedding is in {self._mode!r} mode, not {mode!r}")

    def di_embed(self, x: Tensor) -> Tensor:
        self._require("di")
        return di_embed(x, self.kernel, self.bias)

    def spatial_embed(self, x: Tensor) -> Tensor:
        self._require("spatial")
        return spatial_embed(x, self.weight, self.bias)

    def temporal_embed(self, x: Tensor) -> Tensor:
        self._require("temporal")
        return temporal_embed(x, self._p, self.weight, self.bias)

    def __call__(self, x: Tensor) -> PatchedEmbedding:
        """Embed and patch an ``(B, T, D)`` series."""
        b, length, d = x.shape
        p = self._p
        if self._mode == "di":
            emb = self.di_embed(T.reshape(x, (b, 1, length, d)))
            return patch(emb, p)
        if self._mode == "spatial":
            emb = self.spatial_embed(x)  # (B, T, c)
            c = emb.shape[-1]
            emb = T.reshape(T.transpose(emb, (0, 2, 1)), (b, c, length, 1))
            return patch(emb, p)
        emb = self.temporal_embed(x)  # (B, N, c, D)
        n, c = emb.shape[1], emb.shape[2]
        emb = T.reshape(T.transpose(emb, (0, 2, 1, 3)), (b, c, n, 1, d))
        values = T.broadcast_to(emb, (b, c, n, p, d))
        return PatchedEmbedding(values, p, n, n * p - length)
