"""Command-line entry point: ``metricdst <command> [options]``.

Exit codes: 0 success, 1 user error (bad flags, config or data), 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from pathlib import Path

from .core import DataError
from .io import (ExperimentConfig, atomic_write_text, merge_config, read_config,
                 read_dataset, read_results, write_config, write_dataset, write_diagnostics,
                 write_indices, write_results)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _common(p):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metricdst", description="Diversity-guided self-training "
                     "with metric learning.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    _common(p)
    p.add_argument("--generator", choices=("moons", "hypercube"))
    p.add_argument("--n-samples", type=int)
    p.add_argument("--noise", type=float, help="moons noise stddev")
    p.add_argument("--n-features", type=int)
    p.add_argument("--n-informative", type=int)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("bias", help="apply the configured bias to a dataset's labeled rows")
    _common(p)
    p.add_argument("data", nargs="?", help="dataset CSV (default: config dataset)")
    p.add_argument("--kind", choices=("delta", "hierarchy", "random", "none"))
    p.add_argument("--n-select", type=int)
    p.add_argument("--out", required=True, help="output index CSV")

    p = sub.add_parser("run", help="single method on one holdout split")
    _common(p)
    p.add_argument("data", nargs="?", help="dataset CSV (default: config dataset)")
    p.add_argument("--method", default="metric_dst",
                   choices=("supervised", "metric_st", "metric_dst"))
    p.add_argument("--run", type=int, default=0, help="run number (selects the split)")
    p.add_argument("--diagnostics", help="write per-iteration JSON-lines here")
    p.add_argument("--out", help="write the result JSON here (default: stdout)")

    p = sub.add_parser("experiment", help="full cross-validated bias benchmark")
    _common(p)
    p.add_argument("data", nargs="?", help="dataset CSV (default: config dataset)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("grid", help="self-training hyperparameter grid search")
    _common(p)
    p.add_argument("data", nargs="?", help="dataset CSV (default: config dataset)")
    p.add_argument("--grid", required=True,
                   help='JSON map of selftrain keys to value lists, e.g. {"mu": [0.85, 0.9]}')
    p.add_argument("--strategy", choices=("ST", "DST"), default="DST")
    p.add_argument("--run", type=int, default=0)
    p.add_argument("--out", help="write the search result JSON here (default: stdout)")

    p = sub.add_parser("report", help="medians and Wilcoxon table from a results CSV")
    _common(p)
    p.add_argument("results", help="results CSV")
    p.add_argument("--reference", default="supervised_bias")
    p.add_argument("--json", help="also write the summary JSON here")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = read_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    data = getattr(args, "data", None)
    if data:
        over["dataset"] = {"path": data, "generator": None}
    if args.jobs < 1:
        raise DataError("--jobs must be at least 1")
    return merge_config(cfg, over) if over else cfg


def _emit_json(doc, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


def cmd_gen(args, cfg):
    from .experiment import build_dataset

    d = {}
    for flag, key in (("generator", "generator"), ("n_samples", "n_samples"),
                      ("noise", "noise"), ("n_features", "n_features"),
                      ("n_informative", "n_informative")):
        if getattr(args, flag) is not None:
            d[key] = getattr(args, flag)
    if d:
        cfg = merge_config(cfg, {"dataset": d})
    if cfg.dataset.path:
        raise DataError("gen needs a generator, not a dataset path")
    ds = build_dataset(cfg)
    write_dataset(ds, args.out)
    _log(f"wrote {ds.n_samples} x {ds.n_features} to {args.out}")


def cmd_bias(args, cfg):
    from .experiment import apply_bias, build_dataset

    b = {}
    if args.kind is not None:
        b["kind"] = args.kind
    if args.n_select is not None:
        b["n_select"] = args.n_select
    if b:
        cfg = merge_config(cfg, {"bias": b})
    ds = build_dataset(cfg)
    sel = apply_bias(ds, ds.labeled_indices(), cfg, cfg.seed)
    write_indices(sel, args.out)
    _log(f"selected {len(sel)} of {len(ds.labeled_indices())} labeled rows")


def cmd_run(args, cfg):
    from .experiment import build_dataset, run_single

    ds = build_dataset(cfg)
    out, res = run_single(ds, cfg, args.method, args.run, return_result=True)
    if res is not None:
        out.update(stop_reason=res.stop_reason, best_iteration=res.best_iteration,
                   iterations=len(res.records))
        if args.diagnostics:
            write_diagnostics(res.records, args.diagnostics)
    _emit_json(out, args.out)


def cmd_experiment(args, cfg):
    from .experiment import build_dataset, run_benchmark_experiment, summarize

    ds = build_dataset(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _log(f"{cfg.experiment}: {ds.n_samples} samples, {cfg.eval.n_folds} folds, "
         f"jobs={args.jobs}")
    outcome = run_benchmark_experiment(ds, cfg, jobs=args.jobs, progress=_log)
    write_results(outcome.records, out_dir / "results.csv", config=cfg)
    write_diagnostics(outcome.diagnostics, out_dir / "diagnostics.jsonl")
    summary = {
        "experiment": cfg.experiment,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": cfg.to_dict(),
        "summary": summarize(outcome.records),
        "diversity": {str(f): {m: {str(c): v for c, v in dv.items()} for m, dv in d.items()}
                      for f, d in outcome.diversity.items()},
    }
    atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2) + "\n")
    _log(f"wrote {len(outcome.records)} records to {out_dir / 'results.csv'}")


def cmd_grid(args, cfg):
    from .experiment import SelfTrainObjective, build_dataset, grid_search

    try:
        grid = json.loads(args.grid)
    except json.JSONDecodeError as exc:
        raise DataError(f"--grid is not valid JSON ({exc})") from None
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise DataError("--grid must map selftrain keys to lists of values")
    # reject unknown keys before launching any run
    merge_config(cfg, {"selftrain": {k: v[0] for k, v in grid.items() if v}})
    ds = build_dataset(cfg)
    best, evaluated = grid_search(grid, SelfTrainObjective(ds, cfg, args.strategy, args.run),
                                  jobs=args.jobs)
    for cell, loss in evaluated:
        _log(f"{json.dumps(cell, sort_keys=True)} -> {loss:.6g}")
    _emit_json({"best": best, "cells": [{"params": c, "validation_loss": v}
                                        for c, v in evaluated]}, args.out)


def cmd_report(args, cfg):
    from .experiment import format_report, summarize

    records = read_results(args.results)
    if not records:
        raise DataError(f"{args.results}: no result rows")
    summary = summarize(records, reference=args.reference)
    print(format_report(summary, reference=args.reference))
    if args.json:
        atomic_write_text(args.json, json.dumps(summary, indent=2, sort_keys=True) + "\n")


COMMANDS = {"gen": cmd_gen, "bias": cmd_bias, "run": cmd_run, "experiment": cmd_experiment,
            "grid": cmd_grid, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"metricdst: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception:
        traceback.print_exc()
        print("metricdst: internal error", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
