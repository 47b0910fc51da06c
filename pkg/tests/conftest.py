import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spatialvqa.captions import GenerationError, generate_caption  # noqa: E402
from spatialvqa.dataset import build_dataset, derive_seed, scene_config  # noqa: E402
from spatialvqa.scene import PlacementError, sample_scene  # noqa: E402


@lru_cache(maxsize=None)
def generated_pairs(caption_type: str, count: int, seed: int = 0, canvas: int = 64):
    """``count`` (scene, caption, label) triples, generated the same way dataset records are."""
    out = []
    index = 0
    config = scene_config(caption_type, canvas)
    while len(out) < count:
        target = index % 2 == 0
        try:
            scene = sample_scene(derive_seed(seed, 7, index), config)
            caption, label = generate_caption(scene, caption_type, target, derive_seed(seed, 8, index))
        except (PlacementError, GenerationError):
            index += 1
            continue
        out.append((scene, caption, label))
        index += 1
    return tuple(out)


@pytest.fixture(scope="session")
def datasets(tmp_path_factory):
    """Small desk-sized datasets for every caption type."""
    root = tmp_path_factory.mktemp("data")
    for kind in ("explicit", "comparative", "superlative"):
        build_dataset(kind, 256, 64, 5, root / kind, canvas=32, shard_size=100)
    return root


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """64 train records, used for memorization and harness tests."""
    root = tmp_path_factory.mktemp("tiny")
    build_dataset("superlative", 64, 64, 3, root, canvas=32)
    return root


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module and module.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
