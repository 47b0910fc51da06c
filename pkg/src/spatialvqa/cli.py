"""Command line interface: dataset generation, training, evaluation and reports."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

from .dataset import DATA_PRESETS, DatasetError, build_dataset
from .harness import (ExperimentConfig, HarnessError, NumericError, collect_experiments, emit_report, evaluate,
                      train)
from .language import CAPTION_TYPES
from .models import ConfigError
from .nn.checkpoint import CheckpointError

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5

log = logging.getLogger("spatialvqa")


def cmd_generate(args) -> int:
    preset = DATA_PRESETS[args.preset]
    n_train = args.train if args.train is not None else preset.n_train
    n_val = args.val if args.val is not None else preset.n_val
    if n_train < 1 or n_val < 1:
        raise ConfigError("--train and --val must be at least 1")
    manifest = build_dataset(args.type, n_train, n_val, args.seed, args.out, canvas=preset.canvas,
                             shard_size=preset.shard_size, workers=args.workers, png_dir=args.png)
    print(f"wrote {n_train} train / {n_val} val {args.type} records ({manifest['canvas']}px) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.iterations is not None:
        cfg = replace(cfg, iterations=args.iterations)
    seeds = [args.seed] if args.seed is not None else None
    for run in train(cfg, seeds=seeds, resume=args.resume):
        final = run.curve.val_accuracy[-1] if len(run.curve) else float("nan")
        print(f"seed {run.seed}: final val accuracy {final:.4f} ({run.directory})")
    return EXIT_OK


def cmd_eval(args) -> int:
    result = evaluate(args.checkpoint, args.data, args.split)
    rows = result.rows()
    for axis, key, correct, total, acc in rows:
        print(f"{axis:9s} {key:22s} {correct:7d}/{total:<7d} {acc:.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("axis", "group", "correct", "total", "accuracy"))
            w.writerows((a, k, c, t, f"{acc:.6f}") for a, k, c, t, acc in rows)
    return EXIT_OK


def cmd_curves(args) -> int:
    experiments = collect_experiments(args.input)
    if not experiments:
        raise DatasetError(f"no curves found under {args.input}")
    for path in emit_report(experiments, args.out, figures=not args.no_figures):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_trends(args) -> int:
    from .trends import evaluate_trends, write_trends

    results = evaluate_trends(args.input)
    for r in results:
        print(r.line())
    if args.out:
        write_trends(results, args.out)
    failed = any(r.passed is False and r.gate for r in results)
    return EXIT_FAILED_CHECK if failed else EXIT_OK


def cmd_suite(args) -> int:
    from .trends import suite_configs, write_suite

    configs = suite_configs(args.data_root, args.out, args.preset, args.iterations, args.seeds)
    for path in write_suite(configs, args.configs):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialvqa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build a dataset (shards + manifest)")
    p.add_argument("--type", required=True, choices=CAPTION_TYPES)
    p.add_argument("--train", type=int, help="training records (default: preset size)")
    p.add_argument("--val", type=int, help="validation records (default: preset size)")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(DATA_PRESETS), default="full")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--png", metavar="DIR", help="also export a few validation images for inspection")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train every seed of an experiment config")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="train only this seed")
    p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    p.add_argument("--iterations", type=int, help="override the iteration budget")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--out", help="also write the breakdown as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curves", help="aggregate per-seed curves into a CSV report with figures")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("trends", help="evaluate the scaled-down trend checks from finished runs")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="write check results as CSV")
    p.set_defaults(func=cmd_trends)

    p = sub.add_parser("suite", help="write experiment configs for the trend checks")
    p.add_argument("--data-root", required=True, help="directory with one dataset per caption type")
    p.add_argument("--out", required=True, help="results directory the configs will train into")
    p.add_argument("--configs", required=True, help="where to write the JSON configs")
    p.add_argument("--preset", choices=("full", "desk"), default="desk")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, CheckpointError, HarnessError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
