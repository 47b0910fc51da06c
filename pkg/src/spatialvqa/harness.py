"""Training, evaluation, learning curves and multi-seed aggregation."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset, DatasetError, derive_seed, epoch_permutation
from .language import np_pattern, parse
from .models import ConfigError, ModelConfig, VQAModel, build_model
from .nn import Adam, no_grad
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.functional import softmax_cross_entropy

log = logging.getLogger(__name__)

CURVE_HEADER = ("iteration", "train_accuracy", "val_accuracy", "loss")
AGGREGATE_HEADER = ("experiment", "iteration", "mean", "min", "max")
EVAL_EVERY = {"full": 1000, "desk": 250}
DEFAULT_SEEDS = (0, 1, 2)
BATCH_SIZE = 64
LEARNING_RATE = 3e-4
EVAL_BATCH = 256


class HarnessError(Exception):
    pass


class NumericError(HarnessError):
    """A non-finite loss; training aborts after writing a diagnostic snapshot."""


class VocabularyMismatch(DatasetError):
    pass


def default_iterations(config: ModelConfig) -> int:
    if config.preset == "desk":
        return 30_000
    return 100_000 if config.modality != "both" else 200_000


@dataclass
class ExperimentConfig:
    data: str
    model: str | dict
    out: str
    preset: str = "full"
    iterations: int | None = None
    eval_every: int | None = None
    seeds: Sequence[int] = DEFAULT_SEEDS
    batch_size: int = BATCH_SIZE
    learning_rate: float = LEARNING_RATE
    name: str | None = None

    def model_config(self) -> ModelConfig:
        if isinstance(self.model, str):
            config = ModelConfig.from_name(self.model, self.preset)
        elif isinstance(self.model, dict):
            config = replace(ModelConfig.from_dict(self.model), preset=self.preset)
        else:
            raise ConfigError(f"model must be a legend name or an object, got {type(self.model).__name__}")
        return config.validate()

    def resolved(self) -> "ExperimentConfig":
        model = self.model_config()
        iterations = self.iterations if self.iterations is not None else default_iterations(model)
        eval_every = self.eval_every if self.eval_every is not None else EVAL_EVERY.get(self.preset, 1000)
        eval_every = min(eval_every, iterations)
        cfg = replace(self, iterations=iterations, eval_every=eval_every, seeds=list(self.seeds))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.preset not in EVAL_EVERY:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        if self.iterations is not None and self.eval_every is not None and self.iterations % self.eval_every:
            raise ConfigError(f"eval_every {self.eval_every} does not divide iterations {self.iterations}")
        if not list(self.seeds):
            raise ConfigError("seeds must be non-empty")
        if self.batch_size < 1 or not self.learning_rate > 0:
            raise ConfigError("batch_size and learning_rate must be positive")

    def experiment_name(self) -> str:
        if self.name:
            return self.name
        manifest = Path(self.data) / "manifest.json"
        kind = json.loads(manifest.read_text())["caption_type"] if manifest.exists() else Path(self.data).name
        return f"{kind}-{self.model_config().name}"

    def to_dict(self) -> dict:
        data = asdict(self)
        data["seeds"] = list(self.seeds)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("data", "model", "out"):
            if key not in data:
                raise ConfigError(f"config is missing {key!r}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


# -- curves ----------------------------------------------------------------------------

@dataclass
class Curve:
    iterations: np.ndarray
    train_accuracy: np.ndarray
    val_accuracy: np.ndarray
    loss: np.ndarray

    def __len__(self) -> int:
        return len(self.iterations)

    @classmethod
    def read(cls, path: str | Path) -> "Curve":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != CURVE_HEADER:
                raise DatasetError(f"{path}: unexpected curve header {header}")
            rows = [tuple(float(x) for x in row) for row in reader if row]
        cols = np.array(rows, dtype=np.float64).reshape(-1, 4).T
        return cls(cols[0].astype(np.int64), cols[1], cols[2], cols[3])

    def check(self) -> None:
        if np.any(np.diff(self.iterations) <= 0):
            raise HarnessError("curve iterations must be strictly increasing")
        for acc in (self.train_accuracy, self.val_accuracy):
            if np.any((acc < 0) | (acc > 1)):
                raise HarnessError("accuracies must lie in [0, 1]")


class CurveWriter:
    """Append-only CSV; each row goes out in a single write and is flushed."""

    def __init__(self, path: Path, keep_until: int | None = None):
        self.path = path
        rows = []
        if keep_until is not None and path.exists():
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                next(reader, None)
                rows = [r for r in reader if r and int(r[0]) <= keep_until]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CURVE_HEADER) + "\n")
            for r in rows:
                fh.write(",".join(r) + "\n")

    def append(self, iteration: int, train_acc: float, val_acc: float, loss: float) -> None:
        line = f"{iteration},{train_acc:.6f},{val_acc:.6f},{loss:.6f}\n"
        with open(self.path, "a") as fh:
            fh.write(line)
            fh.flush()


@dataclass
class Aggregate:
    iterations: np.ndarray
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray

    @property
    def final(self) -> tuple[float, float, float]:
        return float(self.mean[-1]), float(self.min[-1]), float(self.max[-1])


def aggregate_runs(curves: Sequence[Curve], column: str = "val_accuracy") -> Aggregate:
    """Rowwise mean/min/max across seeds; all curves must share one iteration grid."""
    if not curves:
        raise HarnessError("need at least one curve to aggregate")
    grid = curves[0].iterations
    for c in curves[1:]:
        if len(c.iterations) != len(grid) or np.any(c.iterations != grid):
            raise HarnessError("curves have mismatched iteration grids")
    values = np.stack([getattr(c, column) for c in curves])
    return Aggregate(grid.copy(), values.mean(axis=0), values.min(axis=0), values.max(axis=0))


# -- training --------------------------------------------------------------------------

def as_inputs(batch, dtype=np.float32):
    return batch.images.astype(dtype, copy=False), batch.token_ids, batch.lengths


class BatchSchedule:
    """Batch indices for any iteration without replaying earlier ones (needed for resume)."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n < batch_size:
            raise DatasetError(f"training split has {n} records, fewer than batch size {batch_size}")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self.per_epoch = n // batch_size
        self._epoch = -1
        self._order = None

    def indices(self, iteration: int) -> np.ndarray:
        """Indices for 1-based ``iteration``; each epoch drops its final short batch."""
        epoch, k = divmod(iteration - 1, self.per_epoch)
        if epoch != self._epoch:
            self._order = epoch_permutation(self.n, derive_seed(self.seed, epoch))
            self._epoch = epoch
        return self._order[k * self.batch_size:(k + 1) * self.batch_size]


def predict(model: VQAModel, dataset: Dataset, batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Eval-mode predictions (1 = agreement) for every record of ``dataset``, in order."""
    was_training = model.training
    model.eval()
    out = []
    with no_grad():
        for batch in dataset.batches(batch_size):
            out.append(model(*as_inputs(batch, model.dtype)).data.argmax(axis=1))
    model.train(was_training)
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _check_compatible(model: VQAModel, dataset: Dataset) -> None:
    if model.preset.image_size != dataset.canvas:
        raise DatasetError(f"model expects {model.preset.image_size}px images, dataset has {dataset.canvas}px "
                           f"(use the matching preset)")


def _model_state(model: VQAModel) -> dict[str, np.ndarray]:
    return {k: np.asarray(v) for k, v in model.state_dict().items()}


def _save(path: Path, model: VQAModel, optimizer: Adam, meta: dict) -> None:
    save_checkpoint(path, _model_state(model), meta, optimizer.state())


def _meta(cfg: ExperimentConfig, model: VQAModel, dataset: Dataset, seed: int, iteration: int) -> dict:
    return {"iteration": iteration, "seed": seed, "model": model.config.to_dict(), "model_name": model.config.name,
            "vocabulary": list(dataset.vocabulary.words), "caption_type": dataset.caption_type,
            "experiment": cfg.to_dict()}


@dataclass
class RunResult:
    seed: int
    directory: Path
    curve: Curve
    evaluation: "Evaluation"


def train_seed(cfg: ExperimentConfig, seed: int, resume: bool = False, train_set: Dataset | None = None,
               val_set: Dataset | None = None) -> RunResult:
    """Train one seed; returns its curve and final validation breakdown."""
    cfg = cfg.resolved()
    train_set = train_set or Dataset(cfg.data, "train")
    val_set = val_set or Dataset(cfg.data, "val")
    run_dir = Path(cfg.out) / cfg.experiment_name() / f"seed-{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = run_dir / "checkpoint.bin"
    model = build_model(cfg.model_config(), seed=seed, vocab_size=len(train_set.vocabulary))
    _check_compatible(model, train_set)
    optimizer = Adam(model.parameters(), lr=cfg.learning_rate)
    start = 0
    if resume and checkpoint.exists():
        arrays, meta, opt_state = load_checkpoint(checkpoint)
        if meta.get("model") != model.config.to_dict() or meta.get("seed") != seed:
            raise ConfigError(f"{checkpoint} was written by a different model or seed")
        model.load_state_dict(arrays)
        optimizer.load_state(opt_state)
        start = int(meta["iteration"])
        log.info("resuming %s from iteration %d", run_dir, start)
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    writer = CurveWriter(run_dir / "curve.csv", keep_until=start if start else None)
    schedule = BatchSchedule(len(train_set), cfg.batch_size, derive_seed(seed, 1))
    model.train()
    correct = seen = 0
    loss_sum = 0.0
    for iteration in range(start + 1, cfg.iterations + 1):
        indices = schedule.indices(iteration)
        batch = train_set.gather(indices)
        optimizer.zero_grad()
        logits = model(*as_inputs(batch, model.dtype))
        loss = softmax_cross_entropy(logits, batch.labels)
        value = float(loss.data)
        if not math.isfinite(value):
            snapshot = run_dir / "nonfinite.bin"
            meta = _meta(cfg, model, train_set, seed, iteration - 1)
            meta["batch_indices"] = [int(i) for i in indices]
            _save(snapshot, model, optimizer, meta)
            raise NumericError(f"non-finite loss {value} at iteration {iteration}; snapshot in {snapshot}")
        loss.backward()
        optimizer.step()
        correct += int((logits.data.argmax(axis=1) == batch.labels).sum())
        seen += len(indices)
        loss_sum += value * len(indices)
        if iteration % cfg.eval_every == 0:
            val_acc = float(np.mean(predict(model, val_set) == val_set.labels()))
            writer.append(iteration, correct / seen, val_acc, loss_sum / seen)
            log.info("seed %d it %d train %.4f val %.4f loss %.4f", seed, iteration, correct / seen, val_acc,
                     loss_sum / seen)
            correct = seen = 0
            loss_sum = 0.0
            _save(checkpoint, model, optimizer, _meta(cfg, model, train_set, seed, iteration))
    evaluation = evaluate_model(model, val_set)
    (run_dir / "eval.json").write_text(json.dumps(evaluation.to_dict(), indent=2))
    return RunResult(seed, run_dir, Curve.read(run_dir / "curve.csv"), evaluation)


def memorize(model: VQAModel, dataset: Dataset, max_iterations: int = 2000, check_every: int = 25,
             target: float = 0.99, seed: int = 0, batch_size: int = BATCH_SIZE,
             learning_rate: float = LEARNING_RATE) -> tuple[int | None, float]:
    """Overfit ``dataset`` with the standard optimizer.

    Every ``check_every`` iterations the whole set is scored in eval mode;
    returns the first iteration reaching ``target`` (None if never) and the
    last accuracy measured.
    """
    optimizer = Adam(model.parameters(), lr=learning_rate)
    schedule = BatchSchedule(len(dataset), min(batch_size, len(dataset)), derive_seed(seed, 1))
    labels = dataset.labels()
    accuracy = 0.0
    model.train()
    for iteration in range(1, max_iterations + 1):
        batch = dataset.gather(schedule.indices(iteration))
        optimizer.zero_grad()
        loss = softmax_cross_entropy(model(*as_inputs(batch, model.dtype)), batch.labels)
        if not math.isfinite(float(loss.data)):
            raise NumericError(f"non-finite loss at iteration {iteration}")
        loss.backward()
        optimizer.step()
        if iteration % check_every == 0:
            accuracy = float(np.mean(predict(model, dataset) == labels))
            if accuracy >= target:
                return iteration, accuracy
    return None, accuracy


def train(cfg: ExperimentConfig, seeds: Sequence[int] | None = None, resume: bool = False) -> list[RunResult]:
    cfg = cfg.resolved()
    train_set = Dataset(cfg.data, "train")
    val_set = Dataset(cfg.data, "val")
    exp_dir = Path(cfg.out) / cfg.experiment_name()
    exp_dir.mkdir(parents=True, exist_ok=True)
    (exp_dir / "experiment.json").write_text(json.dumps({
        "name": cfg.experiment_name(), "caption_type": train_set.caption_type,
        "model": cfg.model_config().name, "preset": cfg.preset, "seeds": list(cfg.seeds)}, indent=2))
    return [train_seed(cfg, s, resume, train_set, val_set) for s in (seeds if seeds is not None else cfg.seeds)]


# -- evaluation ------------------------------------------------------------------------

@dataclass
class Evaluation:
    accuracy: float
    count: int
    by_relation: dict[str, tuple[int, int]] = field(default_factory=dict)
    by_pattern: dict[str, tuple[int, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        table = lambda groups: {k: {"correct": c, "total": t, "accuracy": c / t} for k, (c, t) in groups.items()}
        return {"accuracy": self.accuracy, "count": self.count, "by_relation": table(self.by_relation),
                "by_pattern": table(self.by_pattern)}

    def rows(self) -> list[tuple[str, str, int, int, float]]:
        out = [("overall", "all", int(round(self.accuracy * self.count)), self.count, self.accuracy)]
        for axis, groups in (("relation", self.by_relation), ("pattern", self.by_pattern)):
            out += [(axis, k, c, t, c / t) for k, (c, t) in groups.items()]
        return out


def caption_groups(dataset: Dataset) -> tuple[list[str], list[str]]:
    """Relation kind and noun-phrase pattern of every record, in order."""
    relations, patterns = [], []
    memo: dict[bytes, tuple[str, str]] = {}
    for recs in dataset.records:
        for rec in recs:
            key = bytes(rec["tokens"][:rec["length"]])
            if key not in memo:
                caption = parse(dataset.vocabulary.decode(rec["tokens"], int(rec["length"])))
                memo[key] = (caption.kind, np_pattern(caption))
            relation, pattern = memo[key]
            relations.append(relation)
            patterns.append(pattern)
    return relations, patterns


def score(predictions: np.ndarray, labels: np.ndarray, relations: Sequence[str],
          patterns: Sequence[str], relation_order: Iterable[str] = ()) -> Evaluation:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    hits = predictions == labels

    def grouped(keys, order=()):
        groups = {k: [0, 0] for k in order}
        for key, hit in zip(keys, hits):
            g = groups.setdefault(key, [0, 0])
            g[0] += int(hit)
            g[1] += 1
        return {k: (c, t) for k, (c, t) in groups.items() if t}

    return Evaluation(float(hits.mean()) if len(hits) else 0.0, len(hits),
                      grouped(relations, relation_order), grouped(patterns))


def evaluate_model(model: VQAModel, dataset: Dataset) -> Evaluation:
    relations, patterns = caption_groups(dataset)
    return score(predict(model, dataset), dataset.labels(), relations, patterns,
                 dataset.manifest.get("relations", ()))


def load_model(checkpoint: str | Path) -> tuple[VQAModel, dict]:
    arrays, meta, _ = load_checkpoint(checkpoint)
    config = ModelConfig.from_dict(meta["model"])
    model = build_model(config, seed=0, vocab_size=len(meta["vocabulary"]))
    model.load_state_dict(arrays)
    return model, meta


def evaluate(checkpoint: str | Path, data: str | Path, split: str = "val") -> Evaluation:
    """Accuracy of a checkpoint on a dataset split, grouped by relation and NP pattern."""
    model, meta = load_model(checkpoint)
    dataset = Dataset(data, split)
    if list(dataset.vocabulary.words) != list(meta["vocabulary"]):
        raise VocabularyMismatch(f"{checkpoint} was trained with a different vocabulary than {data}")
    _check_compatible(model, dataset)
    return evaluate_model(model, dataset)


# -- reports ---------------------------------------------------------------------------

@dataclass
class Experiment:
    name: str
    directory: Path
    caption_type: str | None
    model: str | None
    curves: list[Curve]
    evaluations: list[dict]

    @property
    def aggregate(self) -> Aggregate:
        return aggregate_runs(self.curves)


def collect_experiments(root: str | Path) -> list[Experiment]:
    """Every directory under ``root`` holding ``seed-*/curve.csv`` files."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    experiments = []
    for exp_dir in sorted({p.parent.parent for p in root.rglob("seed-*/curve.csv")}):
        seeds = sorted(exp_dir.glob("seed-*/curve.csv"))
        info = {}
        if (exp_dir / "experiment.json").exists():
            info = json.loads((exp_dir / "experiment.json").read_text())
        curves = [Curve.read(p) for p in seeds]
        curves = [c for c in curves if len(c)]
        if not curves:
            continue
        evaluations = [json.loads((p.parent / "eval.json").read_text()) for p in seeds
                       if (p.parent / "eval.json").exists()]
        name = info.get("name") or str(exp_dir.relative_to(root))
        experiments.append(Experiment(name, exp_dir, info.get("caption_type"), info.get("model"), curves, evaluations))
    return experiments


def emit_report(experiments: Sequence[Experiment], out_csv: str | Path, figures: bool = True) -> list[Path]:
    """Aggregate CSV ``(experiment, iteration, mean, min, max)``, a final-accuracy table and figures."""
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    aggregates = {e.name: e.aggregate for e in experiments}
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for name, agg in aggregates.items():
            for row in zip(agg.iterations, agg.mean, agg.min, agg.max):
                w.writerow([name, int(row[0])] + [f"{x:.6f}" for x in row[1:]])
    summary = out_csv.with_name(out_csv.stem + "-summary.csv")
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("experiment", "caption_type", "model", "seeds", "iteration", "mean", "min", "max"))
        for e in experiments:
            agg = aggregates[e.name]
            w.writerow([e.name, e.caption_type or "", e.model or "", len(e.curves), int(agg.iterations[-1])]
                       + [f"{x:.6f}" for x in agg.final])
    written = [out_csv, summary]
    if figures and experiments:
        from .plotting import plot_report
        written += plot_report(experiments, aggregates, out_csv.with_suffix(""))
    return written
