import csv

import pytest

from runs import fake_experiment
from spatialvqa.dataset import DatasetError
from spatialvqa.trends import SUITE, evaluate_trends, suite_configs, write_suite, write_trends


def populate(root, film=0.95, coords_gain=0.08, gap=0.2):
    for t in ("comparative", "superlative"):
        fake_experiment(root, t, "film", [film - 0.01, film, film + 0.01])
        fake_experiment(root, t, "san", [0.7, 0.72, 0.74])
        fake_experiment(root, t, "cnnlstm+early+FiLM+convs", [film - 0.03] * 3)
        fake_experiment(root, t, "mc+FiLM+convs", [film - 0.02] * 3)
    for m in ("cnnlstm", "mc"):
        fake_experiment(root, "superlative", m, [0.7] * 3)
        fake_experiment(root, "superlative", m + "+coords", [0.7 + coords_gain] * 3)
    for m, acc in (("cnnlstm", 0.6), ("san", 0.62), ("relnet", 0.7), ("film", 0.78), ("mc", 0.65)):
        fake_experiment(root, "explicit", m, [acc] * 3, {"shape-pair": 0.7, "color-pair": 0.7 + gap})


def statuses(root):
    return {r.key: r.status for r in evaluate_trends(root)}


def test_all_pass(tmp_path):
    populate(tmp_path)
    assert statuses(tmp_path) == {"coords": "PASS", "film": "PASS", "transfer": "PASS", "explicit-gap": "PASS"}
    write_trends(evaluate_trends(tmp_path), tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [r["check"] for r in rows] == ["coords", "film", "transfer", "explicit-gap"]
    assert rows[-1]["gate"] == "0"


def test_failures(tmp_path):
    populate(tmp_path, film=0.85, coords_gain=0.03, gap=0.05)
    result = statuses(tmp_path)
    assert result["coords"] == result["film"] == result["explicit-gap"] == "FAIL"
    # transfer only compares against film, which the variants still track
    assert result["transfer"] == "PASS"


def test_threshold_is_mean_over_seeds(tmp_path):
    fake_experiment(tmp_path, "superlative", "cnnlstm", [0.7, 0.7, 0.7])
    fake_experiment(tmp_path, "superlative", "cnnlstm+coords", [0.70, 0.75, 0.80])
    fake_experiment(tmp_path, "superlative", "mc", [0.7] * 3)
    fake_experiment(tmp_path, "superlative", "mc+coords", [0.76] * 3)
    assert statuses(tmp_path)["coords"] == "PASS"


def test_missing_runs_are_not_run(tmp_path):
    assert set(statuses(tmp_path).values()) == {"NOT RUN"}
    fake_experiment(tmp_path, "superlative", "cnnlstm", [0.7])
    assert statuses(tmp_path)["coords"] == "NOT RUN"


def test_suite_covers_every_check(tmp_path):
    configs = suite_configs(tmp_path / "data", tmp_path / "runs", iterations=500, seeds=[0, 1, 2])
    pairs = {(c.data.rsplit("/", 1)[-1], c.model) for c in configs}
    assert pairs == {p for group in SUITE.values() for p in group}
    assert len(configs) == len(pairs) == 17
    assert all(c.preset == "desk" and c.resolved().eval_every == 250 for c in configs)
    paths = write_suite(configs, tmp_path / "configs")
    assert len(paths) == 17 and all(p.exists() for p in paths)


def test_missing_root(tmp_path):
    with pytest.raises(DatasetError):
        evaluate_trends(tmp_path / "missing")
