"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment; lists are comma-separated.
Every key has a default, unknown keys are rejected with the valid list.
"""

from __future__ import annotations

import difflib
import typing
from dataclasses import asdict, dataclass, fields

from .pyramid import PATCH_GRID


class ConfigError(ValueError):
    pass


VARIANTS = ("full", "no_inter_scale", "no_all_scale", "bottom_up", "fine", "coarse", "di", "spatial", "temporal")


@dataclass
class RunConfig:
    # data
    data_path: str = ""  # empty: generate a synthetic series from the synth_* keys
    dataset: str = ""  # report label; defaults to the file stem or "synthetic"
    max_rows: int = 0  # 0 keeps every row
    split_ratios: tuple[float, ...] = (0.6, 0.2, 0.2)
    train_stride: int = 1
    eval_stride: int = 1
    # model
    lookback_I: int = 96
    horizon_H: int = 96
    decoder_history_L: int = 0  # 0 means lookback_I // 2
    patch_sizes: tuple[int, ...] = (4, 24)
    channels_c: int = 8
    heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 1
    d_ff: int = 0  # 0 means 4 * d_model per level
    dropout: float = 0.1
    variant: str = "full"
    forecast_mode: str = "decomposed"
    decomp_kernels: tuple[int, ...] = (25,)
    dtype: str = "float32"
    # training
    batch_size: int = 32
    lr_max: float = 1e-3
    lr_min: float = 1e-6
    epochs: int = 10
    patience: int = 5
    grad_clip: float = 0.0
    seed: int = 1
    # ablate / sweep
    seeds: tuple[int, ...] = (1,)
    horizons: tuple[int, ...] = (96,)
    lookbacks: tuple[int, ...] = (96,)
    variants: tuple[str, ...] = ("full",)
    report_denormalized: bool = False
    # synthetic data
    synth_T: int = 6000
    synth_D: int = 3
    synth_periods: tuple[float, ...] = (24.0, 96.0)
    synth_amplitudes: tuple[float, ...] = (1.0, 1.0)
    synth_slope: float = 0.0
    synth_noise: float = 0.3
    synth_seed: int = 0

    def validate(self) -> "RunConfig":
        ps = self.patch_sizes
        if not ps or any(p < 1 for p in ps) or any(b <= a for a, b in zip(ps, ps[1:])):
            raise ConfigError(f"patch_sizes must be positive and strictly increasing, got {list(ps)}")
        for v in (self.variant, *self.variants):
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; valid: {', '.join(VARIANTS)}")
        if self.forecast_mode not in ("decomposed", "trend_as_mtpnet", "no_decomposition"):
            raise ConfigError(f"unknown forecast_mode {self.forecast_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        for name in ("lookback_I", "horizon_H", "channels_c", "heads", "batch_size", "train_stride", "eval_stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        return self

    def with_(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)


KEYS = {f.name: f for f in fields(RunConfig)}
_HINTS = typing.get_type_hints(RunConfig)


def _convert(key: str, text: str):
    hint = _HINTS[key]
    text = text.strip()
    try:
        if hint is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint in (int, float, str):
            return hint(text)
        (item,) = {a for a in typing.get_args(hint) if a is not Ellipsis}
        return tuple(item(part.strip()) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def _check_key(key: str) -> None:
    if key in KEYS:
        return
    close = difflib.get_close_matches(key, KEYS, n=1, cutoff=0.6)
    hint = f" (did you mean {close[0]!r}?)" if close else ""
    raise ConfigError(f"unknown key {key!r}{hint}; valid keys: {', '.join(KEYS)}")


def parse_lines(lines) -> dict:
    out = {}
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        _check_key(key)
        out[key] = _convert(key, value)
    return out


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        key = key.strip()
        _check_key(key)
        out[key] = _convert(key, value)
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    """Defaults, then the file, then ``key=value`` overrides."""
    values = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_lines(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    values.update(parse_overrides(overrides))
    return RunConfig(**values).validate()


def format_config(cfg: RunConfig) -> str:
    lines = ["# resolved run configuration (defaults + file + overrides)"]
    for key, value in asdict(cfg).items():
        if isinstance(value, (tuple, list)):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


__all__ = ["RunConfig", "ConfigError", "VARIANTS", "PATCH_GRID", "load_config", "format_config", "parse_lines"]
