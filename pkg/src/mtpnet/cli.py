"""Command-line entry point: ``mtpnet {train,eval,ablate,sweep,synth}``.

Every command writes ``config.resolved.txt`` into ``--out`` first. Failures
print one line ``error: <category>: <detail>`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import checkpoint as ckpt
from .config import ConfigError, RunConfig, format_config, load_config, parse_lines
from .data import DataError, write_csv
from .evaluation import ablation_suite, evaluate, format_reports, lookback_sweep, write_reports
from .experiment import build_model, dataset_name, fit, load_series, prepare_data
from .optim import History, mean_l1

PROVENANCE = "config.resolved.txt"
CHECKPOINT = "checkpoint.bin"
HISTORY = "history.csv"
SUMMARY = "summary.txt"
REPORT = "report.csv"
REPORT_TEXT = "report.txt"
SYNTH = "synth.csv"

EXIT_CODES = {"config-error": 2, "data-error": 3, "checkpoint-error": 4, "runtime-error": 5}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtpnet", description="Multi-scale transformer pyramid forecaster")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("train", "train one model and save checkpoint, history and test report"),
        ("eval", "re-score the checkpoint saved by train in --out"),
        ("ablate", "train/evaluate each (horizon, variant, seed) cell"),
        ("sweep", "train/evaluate one model per (lookback, horizon)"),
        ("synth", "write a synthetic multi-seasonal CSV"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current)")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                       help="override one config key; repeatable")
        p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
        p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    return ap


def _resolve(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_train(run: RunConfig, out: str) -> None:
    raw = load_series(run)
    start = time.perf_counter()
    result = fit(run, raw)
    seconds = time.perf_counter() - start
    result.history.write(os.path.join(out, HISTORY))
    header = {"n_vars": raw.values.shape[1], "best_val_l1": result.history.best_val_l1,
              "best_epoch": result.history.best_epoch}
    ckpt.save_checkpoint(os.path.join(out, CHECKPOINT),
                         {k: p.data for k, p in result.model.parameters().items()}, header)
    bundle = result.data.bundle if run.report_denormalized else None
    report = evaluate(result.model, result.data.test, dataset_name(run), run.variant, run.seed, bundle, seconds)
    write_reports([report], os.path.join(out, REPORT))
    summary = (
        f"best_epoch = {result.history.best_epoch}\n"
        f"best_val_l1 = {result.history.best_val_l1!r}\n"
        f"test_mse = {report.mse!r}\n"
        f"test_mae = {report.mae!r}\n"
        f"params = {result.model.num_parameters()}\n"
    )
    _write(os.path.join(out, SUMMARY), summary)
    print(summary, end="")


def cmd_eval(run: RunConfig, out: str) -> None:
    path = os.path.join(out, CHECKPOINT)
    if not os.path.exists(path):
        raise ckpt.CheckpointError(f"no checkpoint at {path}; run train first")
    header, params = ckpt.load_checkpoint(path)
    raw = load_series(run)
    if raw.values.shape[1] != header.get("n_vars"):
        raise ckpt.CheckpointError(f"checkpoint expects {header.get('n_vars')} variables, data has {raw.values.shape[1]}")
    data = prepare_data(run, raw)
    model = build_model(run, raw.values.shape[1])
    ckpt.load_into(model, params)
    val_l1 = mean_l1(model, data.val.inputs, data.val.targets)
    bundle = data.bundle if run.report_denormalized else None
    report = evaluate(model, data.test, dataset_name(run), run.variant, run.seed, bundle)
    write_reports([report], os.path.join(out, "eval_" + REPORT))
    recorded = header.get("best_val_l1")
    text = (
        f"val_l1 = {val_l1!r}\n"
        f"recorded_val_l1 = {recorded!r}\n"
        f"test_mse = {report.mse!r}\n"
        f"test_mae = {report.mae!r}\n"
    )
    _write(os.path.join(out, "eval.txt"), text)
    print(text, end="")


def cmd_ablate(run: RunConfig, out: str) -> None:
    reports, table = ablation_suite(run)
    write_reports(reports, os.path.join(out, REPORT))
    _write(os.path.join(out, REPORT_TEXT), format_reports(reports) + "\n" + table)
    print(table, end="")


def cmd_sweep(run: RunConfig, out: str) -> None:
    reports, table = lookback_sweep(run)
    write_reports(reports, os.path.join(out, REPORT))
    _write(os.path.join(out, REPORT_TEXT), table)
    print(table, end="")


def cmd_synth(run: RunConfig, out: str) -> None:
    raw = load_series(run.with_(data_path="", max_rows=0))
    path = os.path.join(out, SYNTH)
    write_csv(raw, path)
    print(f"wrote {len(raw)} rows x {len(raw.columns)} variables to {path}")


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "sweep": cmd_sweep, "synth": cmd_synth}


def _fail(category: str, detail) -> int:
    detail = " ".join(str(detail).split())
    print(f"error: {category}: {detail}", file=sys.stderr)
    return EXIT_CODES[category]


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "eval" and not args.config and os.path.exists(os.path.join(args.out, PROVENANCE)):
            # eval defaults to the configuration the checkpoint was trained with
            args.config = os.path.join(args.out, PROVENANCE)
        run_cfg = _resolve(args)
        os.makedirs(args.out, exist_ok=True)
        if args.command != "eval":
            _write(os.path.join(args.out, PROVENANCE), format_config(run_cfg))
        COMMANDS[args.command](run_cfg, args.out)
    except ConfigError as exc:
        return _fail("config-error", exc)
    except (DataError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        return _fail("data-error", exc)
    except ckpt.CheckpointError as exc:
        return _fail("checkpoint-error", exc)
    except (ValueError, FloatingPointError) as exc:
        return _fail("runtime-error", exc)
    return 0


def main() -> None:
    sys.exit(run())


__all__ = ["run", "main", "parse_lines", "History"]
