"""Seasonal / trend-cyclical split by averaged moving-average pooling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class DecompositionConfig:
    kernel_sizes: tuple[int, ...] = (25,)

    def __post_init__(self):
        ks = tuple(int(k) for k in self.kernel_sizes)
        if not ks:
            raise ValueError("kernel_sizes must be non-empty")
        for k in ks:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"moving-average kernel must be odd and >= 1, got {k}")
        object.__setattr__(self, "kernel_sizes", ks)


@dataclass
class DecompositionOutput:
    seasonal: np.ndarray
    trend: np.ndarray = field(repr=False)


def moving_average(x: np.ndarray, kernel: int) -> np.ndarray:
    """Centered moving average along the time axis (second to last).

    The first and last rows are replicated ``(kernel - 1) // 2`` times so the
    output keeps the input length. Accepts ``(..., I, D)`` arrays.
    """
    kernel = int(kernel)
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"moving-average kernel must be odd and >= 1, got {kernel}")
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    length = x.shape[-2]
    if kernel > 2 * length - 1:
        raise ValueError(f"kernel {kernel} exceeds 2*I-1 = {2 * length - 1}")
    if kernel == 1:
        return x.copy()
    half = (kernel - 1) // 2
    widths = [(0, 0)] * x.ndim
    widths[-2] = (half, half)
    padded = np.pad(x, widths, mode="edge")
    return sliding_window_view(padded, kernel, axis=-2).mean(axis=-1)


def decompose(x: np.ndarray, cfg: DecompositionConfig | None = None) -> DecompositionOutput:
    cfg = cfg or DecompositionConfig()
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[-2] < 1 or x.shape[-1] < 1:
        raise ValueError(f"decompose expects an (I, D) matrix, got shape {x.shape}")
    trend = sum(moving_average(x, k) for k in cfg.kernel_sizes) / len(cfg.kernel_sizes)
    return DecompositionOutput(seasonal=x - trend, trend=trend)
