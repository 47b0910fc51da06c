"""Scaled-down trend checks evaluated from finished experiment directories.

Each check compares mean-over-seeds final validation accuracies of a few
(caption type, model) experiments. Missing experiments make a check
"not run" rather than failed.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .harness import Experiment, ExperimentConfig, collect_experiments

IMPLICIT = ("comparative", "superlative")
EXPLICIT_MODELS = ("cnnlstm", "san", "relnet", "film", "mc")

# (caption type, model legend) pairs each check reads
SUITE: dict[str, tuple[tuple[str, str], ...]] = {
    "coords": (("superlative", "cnnlstm"), ("superlative", "cnnlstm+coords"),
               ("superlative", "mc"), ("superlative", "mc+coords")),
    "film": tuple((t, m) for t in IMPLICIT for m in ("film", "san")),
    "transfer": tuple((t, m) for t in IMPLICIT for m in ("film", "cnnlstm+early+FiLM+convs", "mc+FiLM+convs")),
    "explicit-gap": tuple(("explicit", m) for m in EXPLICIT_MODELS),
}


@dataclass
class TrendResult:
    key: str
    description: str
    passed: bool | None
    details: list[str] = field(default_factory=list)
    gate: bool = True

    @property
    def status(self) -> str:
        if self.passed is None:
            return "NOT RUN"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        tag = "" if self.gate else " (reported trend)"
        return f"[{self.status}] {self.key}: {self.description}{tag}" + "".join(f"\n    {d}" for d in self.details)


class Results:
    def __init__(self, experiments: Sequence[Experiment]):
        self.by_key = {(e.caption_type, e.model): e for e in experiments}

    def final(self, caption_type: str, model: str) -> float | None:
        e = self.by_key.get((caption_type, model))
        return None if e is None else e.aggregate.final[0]

    def missing(self, pairs) -> list[str]:
        return [f"{t}/{m}" for t, m in pairs if (t, m) not in self.by_key]


def _missing(key, description, results, pairs, gate=True) -> TrendResult | None:
    missing = results.missing(pairs)
    if missing:
        return TrendResult(key, description, None, [f"missing experiments: {', '.join(missing)}"], gate)
    return None


def check_coords(results: Results) -> TrendResult:
    desc = "coordinates add >= 5 points on superlative (cnnlstm, mc)"
    miss = _missing("coords", desc, results, SUITE["coords"])
    if miss:
        return miss
    ok, details = True, []
    for base in ("cnnlstm", "mc"):
        a, b = results.final("superlative", base), results.final("superlative", base + "+coords")
        ok &= b - a >= 0.05
        details.append(f"{base}: {a:.4f} -> +coords {b:.4f} (delta {b - a:+.4f})")
    return TrendResult("coords", desc, ok, details)


def check_film(results: Results) -> TrendResult:
    desc = "film >= 0.88 on implicit data and >= 10 points above san"
    miss = _missing("film", desc, results, SUITE["film"])
    if miss:
        return miss
    ok, details = True, []
    for t in IMPLICIT:
        film, san = results.final(t, "film"), results.final(t, "san")
        ok &= film >= 0.88 and film - san >= 0.10
        details.append(f"{t}: film {film:.4f}, san {san:.4f} (delta {film - san:+.4f})")
    return TrendResult("film", desc, ok, details)


def check_transfer(results: Results) -> TrendResult:
    desc = "early-fusion FiLM+convs variants within 5 points of film on implicit data"
    miss = _missing("transfer", desc, results, SUITE["transfer"])
    if miss:
        return miss
    ok, details = True, []
    for t in IMPLICIT:
        film = results.final(t, "film")
        for m in ("cnnlstm+early+FiLM+convs", "mc+FiLM+convs"):
            acc = results.final(t, m)
            ok &= film - acc <= 0.05
            details.append(f"{t}: {m} {acc:.4f} vs film {film:.4f} (gap {film - acc:+.4f})")
    return TrendResult("transfer", desc, ok, details)


def pattern_accuracy(experiment: Experiment, pattern: str) -> float | None:
    values = [e["by_pattern"][pattern]["accuracy"] for e in experiment.evaluations if pattern in e["by_pattern"]]
    return float(np.mean(values)) if values else None


def check_explicit_gap(results: Results) -> TrendResult:
    desc = "best explicit model: shape-pair accuracy >= 10 points below color-pair"
    present = [(t, m) for t, m in SUITE["explicit-gap"] if (t, m) in results.by_key]
    if not present:
        return _missing("explicit-gap", desc, results, SUITE["explicit-gap"], gate=False)
    t, best = max(present, key=lambda p: results.final(*p))
    exp = results.by_key[(t, best)]
    shape, color = pattern_accuracy(exp, "shape-pair"), pattern_accuracy(exp, "color-pair")
    details = [f"best model {best} ({results.final(t, best):.4f})"]
    if shape is None or color is None:
        return TrendResult("explicit-gap", desc, None, details + ["per-pattern evaluation missing"], gate=False)
    details.append(f"shape-pair {shape:.4f}, color-pair {color:.4f} (gap {color - shape:+.4f})")
    return TrendResult("explicit-gap", desc, color - shape >= 0.10, details, gate=False)


CHECKS = (check_coords, check_film, check_transfer, check_explicit_gap)


def evaluate_trends(root: str | Path) -> list[TrendResult]:
    results = Results(collect_experiments(root))
    return [check(results) for check in CHECKS]


def write_trends(results: Sequence[TrendResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("check", "status", "gate", "details"))
        for r in results:
            w.writerow((r.key, r.status, int(r.gate), " | ".join(r.details)))


def suite_configs(data_root: str | Path, out: str | Path, preset: str = "desk",
                  iterations: int | None = None, seeds: Sequence[int] = (0, 1, 2)) -> list[ExperimentConfig]:
    """Experiment configs covering every trend check; datasets live in ``data_root/<type>``."""
    pairs = dict.fromkeys(p for group in SUITE.values() for p in group)
    return [ExperimentConfig(data=str(Path(data_root) / t), model=m, out=str(out), preset=preset,
                             iterations=iterations, seeds=list(seeds)) for t, m in pairs]


def write_suite(configs: Sequence[ExperimentConfig], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for cfg in configs:
        path = directory / f"{Path(cfg.data).name}-{cfg.model}.json"
        path.write_text(json.dumps(cfg.to_dict(), indent=2))
        paths.append(path)
    return paths
