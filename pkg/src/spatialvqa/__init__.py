"""Spatial-language VQA: scene/caption generation, a truth oracle, a small autodiff
library, five VQA model cores and an experiment harness."""
from .captions import generate_caption
from .dataset import Dataset, batch_iterator, build_dataset, read_examples, write_examples
from .harness import ExperimentConfig, aggregate_runs, emit_report, evaluate, train
from .language import VOCABULARY, Vocabulary, parse, realize
from .models import ModelConfig, build_model
from .scene import Entity, Scene, SceneConfig, render, sample_scene
from .semantics import Verdict, evaluate as evaluate_caption

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Entity", "ExperimentConfig", "ModelConfig", "Scene", "SceneConfig", "VOCABULARY", "Verdict",
    "Vocabulary", "aggregate_runs", "batch_iterator", "build_dataset", "build_model", "emit_report", "evaluate",
    "evaluate_caption", "generate_caption", "parse", "read_examples", "realize", "render", "sample_scene", "train",
    "write_examples",
]
