"""CSV ingestion, chronological splits, z-scoring, sliding windows, synthetic series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from collections.abc import Sequence

import numpy as np

NORM_EPS = 1e-8


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class RawSeries:
    timestamps: list
    values: np.ndarray  # (T_total, D)
    columns: list[str]

    def __len__(self) -> int:
        return self.values.shape[0]

    def head(self, n: int) -> "RawSeries":
        return RawSeries(self.timestamps[:n], self.values[:n], list(self.columns))


@dataclass
class SplitBundle:
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]
    mean: np.ndarray
    std: np.ndarray

    def sizes(self) -> tuple[int, int, int]:
        return tuple(b - a for a, b in (self.train, self.val, self.test))


@dataclass
class SeriesWindow:
    input: np.ndarray  # (I, D)
    target: np.ndarray  # (H, D)
    origin: int


class Windows(Sequence):
    """Stacked sliding windows; indexing yields :class:`SeriesWindow`."""

    def __init__(self, inputs: np.ndarray, targets: np.ndarray, origins: np.ndarray):
        self.inputs = inputs
        self.targets = targets
        self.origins = origins

    def __len__(self) -> int:
        return len(self.origins)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Windows(self.inputs[i], self.targets[i], self.origins[i])
        return SeriesWindow(self.inputs[i], self.targets[i], int(self.origins[i]))


def _parse_timestamp(cell: str):
    cell = cell.strip()
    try:
        return int(cell)
    except ValueError:
        return datetime.fromisoformat(cell)


def load_csv(path) -> RawSeries:
    """Read a header + rows file whose first column is a timestamp or integer index."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: need a timestamp column and at least one variable")
        columns = [h.strip() for h in header[1:]]
        stamps, rows = [], []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
            try:
                stamps.append(_parse_timestamp(row[0]))
            except ValueError:
                raise DataError(f"{path}: row {r}, column {header[0]!r}: bad timestamp {row[0]!r}") from None
            values = []
            for c, cell in enumerate(row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {r}, column {columns[c]!r}: cannot parse {cell!r}")
                values.append(v)
            rows.append(values)
    for r in range(1, len(stamps)):
        if not stamps[r] > stamps[r - 1]:
            raise DataError(f"{path}: timestamps not strictly increasing at row {r + 1}")
    values = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return RawSeries(stamps, values, columns)


def write_csv(raw: RawSeries, path, timestamp_name: str = "date") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([timestamp_name] + list(raw.columns))
        for ts, row in zip(raw.timestamps, raw.values):
            stamp = ts.isoformat(sep=" ") if isinstance(ts, datetime) else str(ts)
            w.writerow([stamp] + [repr(float(v)) for v in row])


def split(raw: RawSeries | np.ndarray, ratios: Sequence[float] = (0.6, 0.2, 0.2), min_len: int = 0) -> SplitBundle:
    """Chronological train/val/test split; statistics come from train rows only.

    Boundaries are ``floor(cumulative_ratio * T)``. ``min_len`` (normally
    ``I + H``) rejects splits too short to hold one window.
    """
    values = raw.values if isinstance(raw, RawSeries) else np.asarray(raw)
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(math.fsum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    total = values.shape[0]
    # the epsilon keeps e.g. 0.7 + 0.1 from flooring to one row short
    b1 = math.floor(ratios[0] * total + 1e-9)
    b2 = math.floor(math.fsum(ratios[:2]) * total + 1e-9)
    bundle_ranges = ((0, b1), (b1, b2), (b2, total))
    for name, (a, b) in zip(("train", "val", "test"), bundle_ranges):
        if b - a < max(min_len, 1):
            raise ValueError(f"{name} split has {b - a} rows, fewer than the {max(min_len, 1)} needed")
    train_rows = values[:b1]
    return SplitBundle(*bundle_ranges, mean=train_rows.mean(axis=0), std=train_rows.std(axis=0))


def normalize(values: np.ndarray, bundle: SplitBundle) -> np.ndarray:
    return (np.asarray(values) - bundle.mean) / (bundle.std + NORM_EPS)


def denormalize(values: np.ndarray, bundle: SplitBundle) -> np.ndarray:
    return np.asarray(values) * (bundle.std + NORM_EPS) + bundle.mean


def windows(values: np.ndarray, span: tuple[int, int], lookback: int, horizon: int, stride: int = 1) -> Windows:
    """Ordered sliding windows inside ``values[span[0]:span[1]]``."""
    start, stop = span
    length = stop - start
    if length < lookback + horizon:
        raise ValueError(f"range of {length} rows cannot hold a window of I+H={lookback + horizon}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    origins = np.arange(start, stop - lookback - horizon + 1, stride)
    offs_in = np.arange(lookback)
    offs_out = np.arange(lookback, lookback + horizon)
    values = np.asarray(values)
    return Windows(values[origins[:, None] + offs_in], values[origins[:, None] + offs_out], origins)


def synth_multiseasonal(
    length: int,
    n_vars: int,
    periods: Sequence[float] = (24, 96),
    amplitudes: Sequence[float] | None = None,
    trend_slope: float = 0.0,
    noise_std: float = 0.0,
    seed: int = 0,
    start: datetime = datetime(2016, 7, 1),
) -> RawSeries:
    """Sum of sinusoids with per-variable random phases, a linear trend, and Gaussian noise.

    Rows are stamped hourly from ``start``.
    """
    periods = [float(p) for p in periods]
    if length < 2 * max(periods):
        raise ValueError(f"length {length} shorter than two of the longest period ({max(periods)})")
    amplitudes = [1.0] * len(periods) if amplitudes is None else [float(a) for a in amplitudes]
    if len(amplitudes) != len(periods):
        raise ValueError("one amplitude per period is required")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_vars, len(periods)))
    t = np.arange(length, dtype=np.float64)[:, None]
    values = trend_slope * t + np.zeros((length, n_vars))
    for j, (period, amp) in enumerate(zip(periods, amplitudes)):
        values = values + amp * np.sin(2 * np.pi * t / period + phases[None, :, j])
    if noise_std > 0:
        values = values + rng.normal(0.0, noise_std, size=values.shape)
    stamps = [start + timedelta(hours=i) for i in range(length)]
    return RawSeries(stamps, values, [f"x{d}" for d in range(n_vars)])


@dataclass
class PreparedData:
    bundle: SplitBundle
    normalized: np.ndarray
    train: Windows
    val: Windows
    test: Windows


def prepare(raw: RawSeries, lookback: int, horizon: int, ratios=(0.6, 0.2, 0.2),
            train_stride: int = 1, eval_stride: int = 1) -> PreparedData:
    bundle = split(raw, ratios, min_len=lookback + horizon)
    z = normalize(raw.values, bundle)
    return PreparedData(
        bundle,
        z,
        windows(z, bundle.train, lookback, horizon, train_stride),
        windows(z, bundle.val, lookback, horizon, eval_stride),
        windows(z, bundle.test, lookback, horizon, eval_stride),
    )
