"""The multi-scale transformer pyramid.

Each level owns an encoder/decoder pair working on patches of its own size.
Encoders pass latents upward (fine to coarse), decoders pass them downward
(coarse to fine), every level also embeds the raw series itself, and a 1x1
convolution over the concatenated level outputs produces the forecast.

Levels are indexed from 0 in this API (level ``k`` here is ``k + 1`` in the
usual 1-based notation).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import tensor as T
from .embedding import EMBEDDING_MODES, Embedding, PatchedEmbedding, inverse_patch, n_patches
from .nn import Module, fan_in_param
from .tensor import Tensor
from .transformer import DecoderBlock, EncoderBlock, PositionEmbedding

PATCH_GRID = (4, 6, 8, 12, 24, 32, 48, 96)


@dataclass(frozen=True)
class PyramidConfig:
    lookback: int
    horizon: int
    n_vars: int
    patch_sizes: tuple[int, ...] = (4, 24)
    channels: int = 8
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 1
    decoder_history: int | None = None
    d_ff: int | None = None
    dropout: float = 0.1
    embedding: str = "di"
    no_inter_scale: bool = False
    no_all_scale: bool = False
    bottom_up_decoder: bool = False
    single_scale_index: int | None = None
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "patch_sizes", tuple(int(p) for p in self.patch_sizes))
        if self.decoder_history is None:
            object.__setattr__(self, "decoder_history", max(1, self.lookback // 2))
        ps = self.patch_sizes
        if not ps:
            raise ValueError("patch_sizes must be non-empty")
        if any(p < 1 for p in ps) or any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError(f"patch_sizes must be positive and strictly increasing, got {list(ps)}")
        for name in ("lookback", "horizon", "decoder_history", "n_vars", "channels", "heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.decoder_history > self.lookback:
            raise ValueError(f"decoder_history {self.decoder_history} exceeds lookback {self.lookback}")
        if self.encoder_layers < 0 or self.decoder_layers < 0:
            raise ValueError("layer counts must be >= 0")
        if self.embedding not in EMBEDDING_MODES:
            raise ValueError(f"embedding must be one of {EMBEDDING_MODES}, got {self.embedding!r}")
        if self.single_scale_index is not None and not -len(ps) <= self.single_scale_index < len(ps):
            raise ValueError(f"single_scale_index {self.single_scale_index} out of range for {list(ps)}")
        if self.no_inter_scale and self.no_all_scale and len(self.scales) > 1:
            raise ValueError("no_inter_scale and no_all_scale together leave upper levels without input")
        for p in self.scales:
            if (self.channels * p) % self.heads:
                raise ValueError(f"heads={self.heads} does not divide d_model={self.channels * p} (p={p})")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @property
    def scales(self) -> tuple[int, ...]:
        """Patch sizes actually instantiated (one level each)."""
        if self.single_scale_index is None:
            return self.patch_sizes
        return (self.patch_sizes[self.single_scale_index],)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "PyramidConfig":
        return replace(self, **changes)


@dataclass
class LevelState:
    patch_size: int
    encoder: Tensor  # (B, c, N_enc, p, D')
    decoder: Tensor  # (B, c, N_dec, p, D')
    n_enc: int
    n_dec: int
    n_pred: int


def build_decoder_input(history, decoder_history: int, horizon: int):
    """Last ``decoder_history`` rows of ``history`` followed by ``horizon`` zero rows."""
    length = history.shape[-2]
    if decoder_history > length:
        raise ValueError(f"decoder history L={decoder_history} exceeds lookback I={length}")
    if isinstance(history, Tensor):
        recent = T.take(history, (Ellipsis, slice(length - decoder_history, length), slice(None)))
        widths = [(0, 0)] * history.ndim
        widths[-2] = (0, horizon)
        return T.pad(recent, widths)
    history = np.asarray(history)
    recent = history[..., length - decoder_history :, :]
    widths = [(0, 0)] * history.ndim
    widths[-2] = (0, horizon)
    return np.pad(recent, widths)


def repatch(h: Tensor, n: int, p: int) -> Tensor:
    """Re-tile a latent ``(B, c, N', p', D)`` onto ``n`` patches of ``p`` steps.

    The sequence is aligned at its most recent step: it is cropped on the
    left, or zero-extended on the left, to length ``n * p``.
    """
    seq = inverse_patch(h)
    length = seq.shape[-2]
    target = n * p
    if length > target:
        seq = T.take(seq, (Ellipsis, slice(length - target, length), slice(None)))
    elif length < target:
        widths = [(0, 0)] * seq.ndim
        widths[-2] = (target - length, 0)
        seq = T.pad(seq, widths)
    *lead, _, d = seq.shape
    return T.reshape(seq, tuple(lead[:-1]) + (lead[-1], n, p, d))


def inter_scale_fuse(x_di: Tensor, h_prev: Tensor | None, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Concatenate along feature maps (c -> 2c) and fuse back to c with a 1x1 conv."""
    if h_prev is None:
        return x_di
    if h_prev.shape != x_di.shape:
        raise ValueError(f"inter-scale shapes differ: {x_di.shape} vs {h_prev.shape}")
    *lead, c, n, p, d = x_di.shape
    lead = tuple(lead)
    both = T.concat([x_di, h_prev], axis=-4)
    flat = T.reshape(both, lead + (2 * c, n * p, d))
    fused = T.conv2d(flat, kernel, bias)
    return T.reshape(fused, lead + (kernel.shape[0], n, p, d))


def to_tokens(x: Tensor) -> Tensor:
    """``(B, c, N, p, D) -> (B, D, N, c*p)``: one token sequence per variable."""
    b, c, n, p, d = x.shape
    return T.reshape(T.transpose(x, (0, 4, 2, 1, 3)), (b, d, n, c * p))


def from_tokens(tokens: Tensor, channels: int, p: int) -> Tensor:
    b, d, n, _ = tokens.shape
    return T.transpose(T.reshape(tokens, (b, d, n, channels, p)), (0, 3, 2, 4, 1))


def crop_future(h_dec: Tensor, horizon: int) -> Tensor:
    """Keep the last ``ceil(H/p)`` patches and, after inverse patching, the last H steps."""
    n_dec, p = h_dec.shape[-3], h_dec.shape[-2]
    n_pred = math.ceil(horizon / p)
    tail = T.take(h_dec, (Ellipsis, slice(n_dec - n_pred, n_dec), slice(None), slice(None)))
    seq = inverse_patch(tail)
    length = seq.shape[-2]
    return T.take(seq, (Ellipsis, slice(length - horizon, length), slice(None)))


class PyramidSide(Module):
    """One encoder or decoder stack of a level, with its own embedding."""

    def __init__(self, cfg: PyramidConfig, p: int, length: int, n_layers: int, decoder: bool,
                 direct_input: bool, fused: bool, rng):
        dtype = cfg.np_dtype
        c = cfg.channels
        self._p = p
        self._n = n_patches(length, p)
        self._decoder = decoder
        self._channels = c
        self.embed = Embedding(cfg.embedding, c, cfg.n_vars, p, rng, dtype) if direct_input else None
        if fused:
            self.fuse_kernel = fan_in_param(rng, (c, 2 * c, 1, 1), 2 * c, dtype)
            self.fuse_bias = fan_in_param(rng, (c,), 2 * c, dtype)
        else:
            self.fuse_kernel = self.fuse_bias = None
        self.pos = PositionEmbedding(c, self._n, p, rng, dtype)
        block = DecoderBlock if decoder else EncoderBlock
        d_model = c * p
        self.block = [block(d_model, cfg.heads, cfg.d_ff, rng, cfg.dropout, dtype) for _ in range(n_layers)]

    def __call__(self, x: Tensor, neighbor: Tensor | None, memory: Tensor | None = None) -> Tensor:
        if self.embed is not None:
            x_di = self.embed(x).values
            if neighbor is not None and self.fuse_kernel is not None:
                x_emb = inter_scale_fuse(x_di, repatch(neighbor, self._n, self._p), self.fuse_kernel, self.fuse_bias)
            else:
                x_emb = x_di
        else:
            if neighbor is None:
                raise ValueError("a level without direct input needs a neighboring latent")
            x_di = x_emb = repatch(neighbor, self._n, self._p)
        tokens = to_tokens(self.pos(x_emb))
        mem = to_tokens(memory) if memory is not None else None
        for blk in self.block:
            tokens = blk(tokens, mem) if self._decoder else blk(tokens)
        return from_tokens(tokens, self._channels, self._p) + x_di


class Level(Module):
    def __init__(self, cfg: PyramidConfig, p: int, enc_first: bool, dec_first: bool, rng):
        enc_direct = enc_first or not cfg.no_all_scale
        dec_direct = dec_first or not cfg.no_all_scale
        enc_fused = not enc_first and not cfg.no_inter_scale and enc_direct
        dec_fused = not dec_first and not cfg.no_inter_scale and dec_direct
        self.encoder = PyramidSide(cfg, p, cfg.lookback, cfg.encoder_layers, False, enc_direct, enc_fused, rng)
        self.decoder = PyramidSide(
            cfg, p, cfg.decoder_history + cfg.horizon, cfg.decoder_layers, True, dec_direct, dec_fused, rng
        )


class MTPNet(Module):
    """Multi-scale transformer pyramid mapping ``(B, I, D)`` to ``(B, H, D)``."""

    def __init__(self, cfg: PyramidConfig, rng: np.random.Generator | int | None = None):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._cfg = cfg
        self._rng = rng
        scales = cfg.scales
        k_levels = len(scales)
        dec_first = 0 if cfg.bottom_up_decoder else k_levels - 1
        self.level = [Level(cfg, p, k == 0, k == dec_first, rng) for k, p in enumerate(scales)]
        out = cfg.n_vars if cfg.embedding == "spatial" else 1
        width = k_levels * cfg.channels
        self.head_kernel = fan_in_param(rng, (out, width, 1, 1), width, cfg.np_dtype)
        self.head_bias = fan_in_param(rng, (out,), width, cfg.np_dtype)

    @property
    def config(self) -> PyramidConfig:
        return self._cfg

    @property
    def rng(self) -> np.random.Generator:
        return self._rng

    def _as_batch(self, x):
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self._cfg.np_dtype))
        if x.ndim == 2:
            return T.reshape(x, (1,) + x.shape), True
        return x, False

    def level_encode(self, k: int, x_enc: Tensor, h_prev: Tensor | None = None) -> Tensor:
        return self.level[k].encoder(x_enc, h_prev)

    def level_decode(self, k: int, x_dec: Tensor, h_neighbor: Tensor | None, memory: Tensor,
                     return_full: bool = False):
        full = self.level[k].decoder(x_dec, h_neighbor, memory)
        n_pred = math.ceil(self._cfg.horizon / full.shape[-2])
        n_dec = full.shape[-3]
        cropped = T.take(full, (Ellipsis, slice(n_dec - n_pred, n_dec), slice(None), slice(None)))
        return (cropped, full) if return_full else cropped

    def forward(self, x_enc, return_states: bool = False):
        cfg = self._cfg
        x, squeeze = self._as_batch(x_enc)
        if x.shape[1:] != (cfg.lookback, cfg.n_vars):
            raise ValueError(f"expected input (B, {cfg.lookback}, {cfg.n_vars}), got {x.shape}")
        x_dec = build_decoder_input(x, cfg.decoder_history, cfg.horizon)
        k_levels = len(self.level)

        encoded = []
        h_prev = None
        for k in range(k_levels):
            h = self.level_encode(k, x, None if cfg.no_inter_scale else h_prev)
            encoded.append(h)
            h_prev = h

        order = range(k_levels) if cfg.bottom_up_decoder else range(k_levels - 1, -1, -1)
        decoded: list = [None] * k_levels
        h_neighbor = None
        for k in order:
            neighbor = None if cfg.no_inter_scale else h_neighbor
            _, full = self.level_decode(k, x_dec, neighbor, encoded[k], return_full=True)
            decoded[k] = full
            h_neighbor = full

        latents = T.concat([crop_future(h, cfg.horizon) for h in decoded], axis=1)  # (B, K*c, H, D')
        pred = T.conv2d(latents, self.head_kernel, self.head_bias)  # (B, out, H, D')
        b = pred.shape[0]
        if cfg.embedding == "spatial":
            pred = T.transpose(T.reshape(pred, (b, cfg.n_vars, cfg.horizon)), (0, 2, 1))
        else:
            pred = T.reshape(pred, (b, cfg.horizon, cfg.n_vars))
        if squeeze:
            pred = T.reshape(pred, pred.shape[1:])
        if not return_states:
            return pred
        states = [
            LevelState(p, encoded[k], decoded[k], encoded[k].shape[-3], decoded[k].shape[-3],
                       math.ceil(cfg.horizon / p))
            for k, p in enumerate(cfg.scales)
        ]
        return pred, states

    __call__ = forward
