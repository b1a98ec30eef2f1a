"""Glue between a :class:`RunConfig` and the model, data, and training code."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .config import RunConfig
from .data import PreparedData, RawSeries, load_csv, prepare, synth_multiseasonal
from .decomposition import DecompositionConfig
from .framework import ForecastModel
from .optim import History, TrainConfig, train
from .pyramid import PyramidConfig

# variant tag -> PyramidConfig overrides
VARIANT_FLAGS = {
    "full": {},
    "no_inter_scale": {"no_inter_scale": True},
    "no_all_scale": {"no_all_scale": True},
    "bottom_up": {"bottom_up_decoder": True},
    "fine": {"single_scale_index": 0},
    "coarse": {"single_scale_index": -1},
    "di": {"embedding": "di"},
    "spatial": {"embedding": "spatial"},
    "temporal": {"embedding": "temporal"},
}


def load_series(run: RunConfig) -> RawSeries:
    if run.data_path:
        raw = load_csv(run.data_path)
    else:
        raw = synth_multiseasonal(
            run.synth_T,
            run.synth_D,
            run.synth_periods,
            run.synth_amplitudes,
            trend_slope=run.synth_slope,
            noise_std=run.synth_noise,
            seed=run.synth_seed,
        )
    return raw.head(run.max_rows) if run.max_rows else raw


def dataset_name(run: RunConfig) -> str:
    if run.dataset:
        return run.dataset
    if run.data_path:
        return os.path.splitext(os.path.basename(run.data_path))[0]
    return "synthetic"


def pyramid_config(run: RunConfig, n_vars: int, variant: str | None = None,
                   lookback: int | None = None, horizon: int | None = None) -> PyramidConfig:
    variant = variant or run.variant
    if variant not in VARIANT_FLAGS:
        raise ValueError(f"unknown variant {variant!r}; valid: {', '.join(VARIANT_FLAGS)}")
    lookback = lookback or run.lookback_I
    history = run.decoder_history_L or None
    if history is not None and lookback != run.lookback_I:
        history = min(history, lookback)
    return PyramidConfig(
        lookback=lookback,
        horizon=horizon or run.horizon_H,
        n_vars=n_vars,
        patch_sizes=run.patch_sizes,
        channels=run.channels_c,
        heads=run.heads,
        encoder_layers=run.enc_layers,
        decoder_layers=run.dec_layers,
        decoder_history=history,
        d_ff=run.d_ff or None,
        dropout=run.dropout,
        dtype=run.dtype,
        **VARIANT_FLAGS[variant],
    )


def build_model(run: RunConfig, n_vars: int, variant: str | None = None, seed: int | None = None,
                lookback: int | None = None, horizon: int | None = None) -> ForecastModel:
    cfg = pyramid_config(run, n_vars, variant, lookback, horizon)
    return ForecastModel(cfg, run.forecast_mode, DecompositionConfig(run.decomp_kernels),
                         seed=run.seed if seed is None else seed)


def train_config(run: RunConfig, seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        batch_size=run.batch_size,
        lr_max=run.lr_max,
        lr_min=run.lr_min,
        epochs=run.epochs,
        seed=run.seed if seed is None else seed,
        patience=run.patience,
        grad_clip=run.grad_clip,
    )


def prepare_data(run: RunConfig, raw: RawSeries, lookback: int | None = None,
                 horizon: int | None = None) -> PreparedData:
    return prepare(raw, lookback or run.lookback_I, horizon or run.horizon_H, run.split_ratios,
                   run.train_stride, run.eval_stride)


@dataclass
class TrainedRun:
    model: ForecastModel
    history: History
    data: PreparedData


def fit(run: RunConfig, raw: RawSeries, variant: str | None = None, seed: int | None = None,
        lookback: int | None = None, horizon: int | None = None, data: PreparedData | None = None) -> TrainedRun:
    data = data or prepare_data(run, raw, lookback, horizon)
    model = build_model(run, raw.values.shape[1], variant, seed, lookback, horizon)
    model, history = train(model, data.train, data.val, train_config(run, seed))
    return TrainedRun(model, history, data)
