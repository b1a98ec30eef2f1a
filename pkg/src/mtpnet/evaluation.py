"""Metrics, the repeat-last baseline, run reports, ablation and look-back sweeps."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

from .config import RunConfig
from .data import RawSeries, SeriesWindow, Windows, denormalize
from .experiment import dataset_name, fit, load_series
from .optim import predict

logger = logging.getLogger(__name__)


def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return pred, target


def mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def mae(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def naive_repeat_last(window, horizon: int | None = None) -> np.ndarray:
    """Repeat the final input row ``H`` times.

    Accepts a :class:`SeriesWindow` (horizon taken from its target) or a raw
    ``(..., I, D)`` array plus ``horizon``.
    """
    if isinstance(window, SeriesWindow):
        horizon = window.target.shape[0]
        window = window.input
    x = np.asarray(window)
    if horizon is None:
        raise ValueError("horizon is required for array input")
    last = x[..., -1:, :]
    return np.repeat(last, horizon, axis=-2)


class RepeatLast:
    """Callable baseline with the same batched interface as a trained model."""

    def __init__(self, horizon: int):
        self.horizon = horizon

    def __call__(self, x):
        return naive_repeat_last(x, self.horizon)


@dataclass
class RunReport:
    dataset: str
    horizon: int
    lookback: int
    seed: int
    variant: str
    mse: float
    mae: float
    seconds: float = 0.0


REPORT_COLUMNS = tuple(f.name for f in fields(RunReport))


def evaluate(model, test: Windows, dataset: str = "", variant: str = "full", seed: int = 0,
             bundle=None, seconds: float = 0.0) -> RunReport:
    """Score ``model`` on every test window.

    With ``bundle`` given, predictions and targets are mapped back to the
    original units first; otherwise metrics are on the normalized scale.
    """
    if len(test) == 0:
        raise ValueError("no test windows")
    pred = predict(model, test.inputs)
    target = test.targets
    if bundle is not None:
        pred, target = denormalize(pred, bundle), denormalize(target, bundle)
    horizon, lookback = target.shape[-2], test.inputs.shape[-2]
    return RunReport(dataset, horizon, lookback, seed, variant, mse(pred, target), mae(pred, target), seconds)


def write_reports(reports, path) -> None:
    """CSV with a header row; columns are :data:`REPORT_COLUMNS` in that order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])


def read_reports(path) -> list[RunReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != REPORT_COLUMNS:
        raise ValueError(f"{path}: unexpected report header {rows[0]}")
    out = []
    for row in rows[1:]:
        out.append(RunReport(row[0], int(row[1]), int(row[2]), int(row[3]), row[4],
                             float(row[5]), float(row[6]), float(row[7])))
    return out


def format_reports(reports) -> str:
    """Aligned text rendering of individual reports."""
    rows = [list(REPORT_COLUMNS)]
    for r in reports:
        rows.append([r.dataset, str(r.horizon), str(r.lookback), str(r.seed), r.variant,
                     f"{r.mse:.4f}", f"{r.mae:.4f}", f"{r.seconds:.1f}"])
    return _align(rows)


def comparison_table(reports) -> str:
    """Variants as rows, one MSE/MAE column pair per horizon, each cell the mean over seeds."""
    variants = list(dict.fromkeys(r.variant for r in reports))
    horizons = sorted({r.horizon for r in reports})
    header = ["variant"]
    for h in horizons:
        header += [f"H{h}_mse", f"H{h}_mae"]
    rows = [header]
    for v in variants:
        row = [v]
        for h in horizons:
            cell = [r for r in reports if r.variant == v and r.horizon == h]
            if cell:
                row += [f"{np.mean([r.mse for r in cell]):.4f}", f"{np.mean([r.mae for r in cell]):.4f}"]
            else:
                row += ["-", "-"]
        rows.append(row)
    return _align(rows)


def sweep_table(reports) -> str:
    """Long format ``H, I, mae, mse`` sorted by (H, I)."""
    rows = [["horizon", "lookback", "mae", "mse"]]
    for r in sorted(reports, key=lambda r: (r.horizon, r.lookback)):
        rows.append([str(r.horizon), str(r.lookback), f"{r.mae:.4f}", f"{r.mse:.4f}"])
    return _align(rows)


def _align(rows) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows) + "\n"


def _cell(run: RunConfig, raw: RawSeries, variant: str, seed: int, lookback: int, horizon: int) -> RunReport:
    start = time.perf_counter()
    result = fit(run, raw, variant=variant, seed=seed, lookback=lookback, horizon=horizon)
    bundle = result.data.bundle if run.report_denormalized else None
    report = evaluate(result.model, result.data.test, dataset_name(run), variant, seed, bundle)
    report.seconds = time.perf_counter() - start
    logger.info("%s H=%d I=%d seed=%d mse=%.4f mae=%.4f", variant, horizon, lookback, seed, report.mse, report.mae)
    return report


def ablation_suite(run: RunConfig, raw: RawSeries | None = None, horizons=None, variants=None,
                   seeds=None) -> tuple[list[RunReport], str]:
    """Train and score every (horizon, variant, seed) cell at ``run.lookback_I``."""
    raw = raw if raw is not None else load_series(run)
    horizons = tuple(horizons or run.horizons)
    variants = tuple(variants or run.variants)
    seeds = tuple(seeds or run.seeds)
    reports = [
        _cell(run, raw, v, s, run.lookback_I, h)
        for h in horizons
        for v in variants
        for s in seeds
    ]
    return reports, comparison_table(reports)


def lookback_sweep(run: RunConfig, raw: RawSeries | None = None, horizons=None,
                   lookbacks=None) -> tuple[list[RunReport], str]:
    """One model per (I, H) with ``run.variant`` and ``run.seed``; rows sorted by (H, I)."""
    raw = raw if raw is not None else load_series(run)
    horizons = sorted(horizons or run.horizons)
    lookbacks = sorted(lookbacks or run.lookbacks)
    reports = [_cell(run, raw, run.variant, run.seed, i, h) for h in horizons for i in lookbacks]
    return reports, sweep_table(reports)
