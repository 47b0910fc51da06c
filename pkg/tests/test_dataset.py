import json
from collections import Counter

import numpy as np
import pytest

from spatialvqa.dataset import (DATA_PRESETS, HEADER, ChecksumError, Dataset, DatasetError, Example,
                                TruncatedRecordError, VersionError, batch_iterator, batches_per_epoch,
                                build_dataset, make_example, open_shard, read_examples, record_size, replay,
                                write_examples)
from spatialvqa.language import VOCABULARY, Vocabulary, parse
from spatialvqa.semantics import Verdict


def fake_examples(n, canvas=8, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        ids, length = VOCABULARY.encode("the leftmost circle is red .".split(), 24)
        out.append(Example(rng.integers(0, 256, size=(canvas, canvas, 3), dtype=np.uint8), ids, length,
                           bool(i % 2), int(rng.integers(1 << 32)), int(rng.integers(1 << 32))))
    return out


def test_round_trip(tmp_path):
    examples = fake_examples(100)
    write_examples(tmp_path / "s.bin", examples, canvas=8)
    assert list(read_examples(tmp_path / "s.bin")) == examples
    info = open_shard(tmp_path / "s.bin")
    assert info.count == 100 and info.canvas == 8
    assert (tmp_path / "s.bin").stat().st_size == HEADER.size + 100 * record_size(8) + 32


def test_flipped_byte_fails_on_open(tmp_path):
    path = tmp_path / "s.bin"
    write_examples(path, fake_examples(10), canvas=8)
    raw = bytearray(path.read_bytes())
    raw[HEADER.size + 200] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        open_shard(path)
    with pytest.raises(ChecksumError):
        next(read_examples(path))


def test_truncated_shard(tmp_path):
    path = tmp_path / "s.bin"
    write_examples(path, fake_examples(10), canvas=8)
    path.write_bytes(path.read_bytes()[:-50])
    with pytest.raises(TruncatedRecordError):
        open_shard(path)
    path.write_bytes(b"SVQA")
    with pytest.raises(TruncatedRecordError):
        open_shard(path)


def test_version_mismatch_yields_nothing(tmp_path):
    path = tmp_path / "s.bin"
    write_examples(path, fake_examples(10), canvas=8)
    raw = bytearray(path.read_bytes())
    raw[4:6] = (2).to_bytes(2, "little")
    path.write_bytes(bytes(raw))
    got = []
    with pytest.raises(VersionError):
        for ex in read_examples(path):
            got.append(ex)
    assert got == []
    assert len({ChecksumError, TruncatedRecordError, VersionError}) == 3
    assert all(issubclass(e, DatasetError) for e in (ChecksumError, TruncatedRecordError, VersionError))


def test_not_a_shard(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"\0" * 64)
    with pytest.raises(DatasetError):
        open_shard(tmp_path / "x.bin")


def test_builds_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        build_dataset("comparative", 120, 30, 7, tmp_path / name, canvas=32, shard_size=50)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "train-00002.bin" in files and "val-00000.bin" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    build_dataset("comparative", 120, 30, 8, tmp_path / "c", canvas=32, shard_size=50)
    assert (tmp_path / "a" / "train-00000.bin").read_bytes() != (tmp_path / "c" / "train-00000.bin").read_bytes()


def test_parallel_build_matches_serial(tmp_path):
    build_dataset("superlative", 40, 10, 2, tmp_path / "a", canvas=32)
    build_dataset("superlative", 40, 10, 2, tmp_path / "b", canvas=32, workers=2)
    assert (tmp_path / "a" / "train-00000.bin").read_bytes() == (tmp_path / "b" / "train-00000.bin").read_bytes()


@pytest.mark.parametrize("kind", ["explicit", "comparative", "superlative"])
def test_manifest_and_labels(datasets, kind):
    directory = datasets / kind
    manifest = json.loads((directory / "manifest.json").read_text())
    assert manifest["counts"] == {"train": 256, "val": 64}
    assert [s["count"] for s in manifest["shards"]["train"]] == [100, 100, 56]
    assert Vocabulary.from_json(directory / "vocab.json").words == VOCABULARY.words
    train = Dataset(directory, "train")
    assert len(train) == 256
    assert train.labels().mean() == 0.5
    assert np.array_equal(train.labels()[:4], [1, 0, 1, 0])
    assert Dataset(directory, "val").labels().mean() == 0.5


@pytest.mark.parametrize("kind", ["explicit", "comparative", "superlative"])
def test_provenance_replay(datasets, kind):
    ds = Dataset(datasets / kind, "val")
    for i in range(len(ds)):
        ex = ds.example(i)
        image, verdict = replay(ex, kind, ds.canvas)
        assert np.array_equal(image, ex.image)
        assert verdict is Verdict.of(ex.label)
        assert ex.caption().caption_type == kind


def test_relation_coverage(datasets):
    ds = Dataset(datasets / "explicit", "train")
    kinds = Counter(ds.example(i).caption().kind for i in range(len(ds)))
    assert set(kinds) == {"left", "right", "above", "below", "closer", "farther", "behind", "front"}


def test_split_seeds_disjoint(datasets):
    train, val = Dataset(datasets / "comparative", "train"), Dataset(datasets / "comparative", "val")
    seeds = lambda ds: {(ds.example(i).scene_seed, ds.example(i).caption_seed) for i in range(len(ds))}
    assert not seeds(train) & seeds(val)


def test_make_example_deterministic():
    a, caption = make_example("superlative", "train", 5, 11, 32)
    b, _ = make_example("superlative", "train", 5, 11, 32)
    assert a == b and not a.label and parse(a.tokens()) == caption


def test_manifest_mismatch_detected(datasets, tmp_path):
    import shutil

    copy = tmp_path / "copy"
    shutil.copytree(datasets / "superlative", copy)
    manifest = json.loads((copy / "manifest.json").read_text())
    manifest["shards"]["val"][0]["sha256"] = "0" * 64
    (copy / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ChecksumError):
        Dataset(copy, "val")
    with pytest.raises(DatasetError):
        Dataset(tmp_path / "missing")


def test_batches(datasets):
    ds = Dataset(datasets / "superlative", "train")
    assert batches_per_epoch(640, 64) == 10
    batches = list(batch_iterator(ds, 64, epoch_seed=3))
    assert len(batches) == 4
    again = list(batch_iterator(ds, 64, epoch_seed=3))
    assert all(np.array_equal(a.indices, b.indices) for a, b in zip(batches, again))
    other = list(batch_iterator(ds, 64, epoch_seed=4))
    assert not np.array_equal(batches[0].indices, other[0].indices)
    seen = np.concatenate([b.indices for b in batches])
    assert len(set(seen)) == 256
    b = batches[0]
    assert b.images.shape == (64, 32, 32, 3) and b.images.dtype == np.float32
    assert 0 <= b.images.min() and b.images.max() <= 1
    assert b.token_ids.shape == (64, 24) and set(b.labels) <= {0, 1}
    assert len(list(batch_iterator(ds, 100, 0))) == 2
    assert sum(len(b.labels) for b in ds.batches(100)) == 256


def test_presets():
    full, desk = DATA_PRESETS["full"], DATA_PRESETS["desk"]
    assert (full.canvas, full.n_train, full.n_val) == (64, 500_000, 10_000)
    assert (desk.canvas, desk.n_train, desk.n_val) == (32, 30_000, 3_000)
    # 200k iterations of 64 over 500k instances is roughly 25 epochs
    assert abs(200_000 * 64 / full.n_train - 25.6) < 1e-9


def test_bad_arguments(tmp_path):
    with pytest.raises(ValueError):
        build_dataset("vague", 2, 2, 0, tmp_path)
    with pytest.raises(ValueError):
        build_dataset("explicit", 0, 2, 0, tmp_path)
