"""Decomposition framework: pyramid on one component, a linear map on the other, summed."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .decomposition import DecompositionConfig, decompose
from .nn import Module, fan_in_param
from .pyramid import MTPNet, PyramidConfig
from .tensor import Tensor

FORECAST_MODES = ("decomposed", "trend_as_mtpnet", "no_decomposition")


def trend_linear(x_t, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Map each variable's ``I`` history values to ``H`` forecasts with shared weights.

    ``x_t`` is ``(..., I, D)``, ``weight`` is ``(I, H)``, ``bias`` is ``(H,)``.
    """
    x_t = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t, dtype=weight.dtype))
    if x_t.shape[-2] != weight.shape[0]:
        raise ValueError(f"trend weights expect {weight.shape[0]} history steps, got {x_t.shape}")
    y = T.matmul(T.transpose(weight, (1, 0)), x_t)
    if bias is not None:
        y = y + T.reshape(bias, (bias.shape[0], 1))
    return y


class TrendLinear(Module):
    def __init__(self, lookback: int, horizon: int, rng, dtype=np.float64):
        self.weight = fan_in_param(rng, (lookback, horizon), lookback, dtype)
        self.bias = fan_in_param(rng, (horizon,), lookback, dtype)

    def __call__(self, x) -> Tensor:
        return trend_linear(x, self.weight, self.bias)


class ForecastModel(Module):
    """Seasonal/trend forecaster.

    ``mode`` decides where the pyramid sits: on the seasonal part
    (``decomposed``), on the trend part (``trend_as_mtpnet``), or on the raw
    series with no linear branch (``no_decomposition``).
    """

    def __init__(
        self,
        cfg: PyramidConfig,
        mode: str = "decomposed",
        decomposition: DecompositionConfig | None = None,
        seed: int | np.random.Generator | None = None,
    ):
        if mode not in FORECAST_MODES:
            raise ValueError(f"mode must be one of {FORECAST_MODES}, got {mode!r}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self._mode = mode
        self._decomposition = decomposition or DecompositionConfig()
        self.mtpnet = MTPNet(cfg, rng)
        self.linear = None if mode == "no_decomposition" else TrendLinear(cfg.lookback, cfg.horizon, rng, cfg.np_dtype)

    @property
    def config(self) -> PyramidConfig:
        return self.mtpnet.config

    @property
    def mode(self) -> str:
        return self._mode

    @property
    def decomposition(self) -> DecompositionConfig:
        return self._decomposition

    def branches(self, x) -> tuple[Tensor, Tensor | None]:
        """Pyramid prediction and linear prediction (``None`` without decomposition)."""
        cfg = self.config
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        data = data.astype(cfg.np_dtype, copy=False)
        if data.shape[-2:] != (cfg.lookback, cfg.n_vars):
            raise ValueError(f"expected input (..., {cfg.lookback}, {cfg.n_vars}), got {data.shape}")
        if self._mode == "no_decomposition":
            return self.mtpnet(data), None
        parts = decompose(data, self._decomposition)
        if self._mode == "decomposed":
            return self.mtpnet(parts.seasonal), self.linear(parts.trend)
        return self.mtpnet(parts.trend), self.linear(parts.seasonal)

    def forecast(self, x) -> Tensor:
        pyramid_pred, linear_pred = self.branches(x)
        return pyramid_pred if linear_pred is None else pyramid_pred + linear_pred

    __call__ = forecast


def forecast(x, model: ForecastModel) -> Tensor:
    return model.forecast(x)
