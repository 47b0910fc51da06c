"""Balanced, reproducible datasets of (image, caption, agreement) records.

Shard file layout (all little-endian)::

    magic    4 bytes  b"SVQA"
    version  u16
    canvas   u16
    max_len  u16
    count    u32
    records  count x record
    sha256   32 bytes over everything before it

    record:  u32 record length (bytes, including this field)
             u32 scene seed, u32 caption seed, u8 label, u8 true token length,
             u8[max_len] token ids, u8[canvas * canvas * 3] RGB bytes (row-major)
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .captions import GenerationError, generate_caption, relation_kinds
from .language import CAPTION_TYPES, MAX_LENGTH, VOCABULARY, Caption, Vocabulary, parse, realize
from .scene import PlacementError, SceneConfig, render, sample_scene, save_png
from .semantics import Verdict, evaluate

log = logging.getLogger(__name__)

MAGIC = b"SVQA"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHHI")
RECORD_HEAD = struct.Struct("<IIIBB")
DIGEST_SIZE = 32
SPLITS = {"train": 0, "val": 1}
SCENE_RETRIES = 200


class DatasetError(Exception):
    pass


class ChecksumError(DatasetError):
    pass


class TruncatedRecordError(DatasetError):
    pass


class VersionError(DatasetError):
    pass


@dataclass(frozen=True)
class DataPreset:
    name: str
    canvas: int
    n_train: int
    n_val: int
    shard_size: int


DATA_PRESETS = {
    "full": DataPreset("full", 64, 500_000, 10_000, 50_000),
    "desk": DataPreset("desk", 32, 30_000, 3_000, 10_000),
}


@dataclass
class Example:
    image: np.ndarray
    token_ids: np.ndarray
    length: int
    label: bool
    scene_seed: int
    caption_seed: int

    def tokens(self, vocabulary: Vocabulary = VOCABULARY) -> list[str]:
        return vocabulary.decode(self.token_ids, self.length)

    def caption(self, vocabulary: Vocabulary = VOCABULARY) -> Caption:
        return parse(self.tokens(vocabulary))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Example) and self.label == other.label and self.length == other.length
                and self.scene_seed == other.scene_seed and self.caption_seed == other.caption_seed
                and np.array_equal(self.image, other.image) and np.array_equal(self.token_ids, other.token_ids))


def record_size(canvas: int, max_len: int = MAX_LENGTH) -> int:
    return RECORD_HEAD.size + max_len + canvas * canvas * 3


def record_dtype(canvas: int, max_len: int = MAX_LENGTH) -> np.dtype:
    return np.dtype([("size", "<u4"), ("scene_seed", "<u4"), ("caption_seed", "<u4"), ("label", "u1"),
                     ("length", "u1"), ("tokens", "u1", (max_len,)), ("image", "u1", (canvas, canvas, 3))])


def scene_config(caption_type: str, canvas: int) -> SceneConfig:
    # behind/front need overlapping pairs, which only explicit captions use
    return SceneConfig(canvas=canvas, allow_overlap=caption_type == "explicit")


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint32)[0])


# -- shard io ------------------------------------------------------------------------

def write_examples(path: str | Path, examples: Iterable[Example], canvas: int,
                   max_len: int = MAX_LENGTH) -> str:
    """Stream examples into a shard; returns the hex sha256 stored in its trailer."""
    path = Path(path)
    size = record_size(canvas, max_len)
    count = 0
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, canvas, max_len, 0))
        for ex in examples:
            if ex.image.shape != (canvas, canvas, 3):
                raise DatasetError(f"image shape {ex.image.shape} does not match canvas {canvas}")
            tokens = np.zeros(max_len, dtype=np.uint8)
            tokens[:len(ex.token_ids)] = ex.token_ids[:max_len]
            fh.write(RECORD_HEAD.pack(size, ex.scene_seed, ex.caption_seed, int(ex.label), ex.length))
            fh.write(tokens.tobytes())
            fh.write(np.ascontiguousarray(ex.image, dtype=np.uint8).tobytes())
            count += 1
        # the count is only known once the stream is exhausted
        fh.seek(0)
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, canvas, max_len, count))
    digest = _hash_file(path, HEADER.size + count * size)
    with open(path, "ab") as fh:
        fh.write(digest)
    return digest.hex()


def _hash_file(path: Path, nbytes: int, chunk: int = 1 << 20) -> bytes:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        remaining = nbytes
        while remaining > 0:
            block = fh.read(min(chunk, remaining))
            if not block:
                break
            h.update(block)
            remaining -= len(block)
    return h.digest()


@dataclass(frozen=True)
class ShardInfo:
    path: Path
    canvas: int
    max_len: int
    count: int

    @property
    def record_size(self) -> int:
        return record_size(self.canvas, self.max_len)


def open_shard(path: str | Path, verify: bool = True) -> ShardInfo:
    """Validate header, size and checksum before any record is read."""
    path = Path(path)
    total = path.stat().st_size
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise TruncatedRecordError(f"{path}: header truncated")
    magic, version, canvas, max_len, count = HEADER.unpack(raw)
    if magic != MAGIC:
        raise DatasetError(f"{path}: not a dataset shard")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, reader supports {FORMAT_VERSION}")
    body = HEADER.size + count * record_size(canvas, max_len)
    if total != body + DIGEST_SIZE:
        raise TruncatedRecordError(f"{path}: expected {body + DIGEST_SIZE} bytes for {count} records, found {total}")
    if verify:
        with open(path, "rb") as fh:
            fh.seek(body)
            stored = fh.read(DIGEST_SIZE)
        if _hash_file(path, body) != stored:
            raise ChecksumError(f"{path}: checksum mismatch")
    return ShardInfo(path, canvas, max_len, count)


def shard_checksum(path: str | Path) -> str:
    info = open_shard(path, verify=False)
    with open(info.path, "rb") as fh:
        fh.seek(-DIGEST_SIZE, 2)
        return fh.read(DIGEST_SIZE).hex()


def _example_from(rec) -> Example:
    return Example(np.array(rec["image"]), np.array(rec["tokens"], dtype=np.int64), int(rec["length"]),
                   bool(rec["label"]), int(rec["scene_seed"]), int(rec["caption_seed"]))


def read_examples(path: str | Path, verify: bool = True) -> Iterator[Example]:
    """Stream examples from a shard (checksum and version are checked on open)."""
    info = open_shard(path, verify)
    dtype = record_dtype(info.canvas, info.max_len)
    size = info.record_size
    with open(info.path, "rb") as fh:
        fh.seek(HEADER.size)
        for _ in range(info.count):
            raw = fh.read(size)
            if len(raw) != size:
                raise TruncatedRecordError(f"{info.path}: truncated record")
            rec = np.frombuffer(raw, dtype=dtype)[0]
            if rec["size"] != size:
                raise TruncatedRecordError(f"{info.path}: record length field {rec['size']} != {size}")
            yield _example_from(rec)


def memmap_records(path: str | Path, verify: bool = True) -> np.ndarray:
    info = open_shard(path, verify)
    return np.memmap(info.path, dtype=record_dtype(info.canvas, info.max_len), mode="r",
                     offset=HEADER.size, shape=(info.count,))


# -- generation ------------------------------------------------------------------------

def make_example(caption_type: str, split: str, index: int, master_seed: int, canvas: int,
                 max_len: int = MAX_LENGTH) -> tuple[Example, Caption]:
    """Generate record ``index`` of ``split``; even indices agree, odd ones disagree.

    The caption seed depends only on the record index, so the relation kind is
    uniform across records; scenes are redrawn until one supports the caption.
    """
    split_id = SPLITS[split]
    target = index % 2 == 0
    caption_seed = derive_seed(master_seed, split_id, index, 0)
    config = scene_config(caption_type, canvas)
    for attempt in range(SCENE_RETRIES):
        scene_seed = derive_seed(master_seed, split_id, index, 1, attempt)
        try:
            scene = sample_scene(scene_seed, config)
            caption, label = generate_caption(scene, caption_type, target, caption_seed)
        except (PlacementError, GenerationError):
            continue
        ids, length = VOCABULARY.encode(realize(caption), max_len)
        return Example(render(scene), ids, length, label, scene_seed, caption_seed), caption
    raise DatasetError(f"{split} record {index}: no scene supported a {caption_type} caption "
                       f"after {SCENE_RETRIES} scenes")


def replay(example: Example, caption_type: str, canvas: int) -> tuple[np.ndarray, Verdict]:
    """Recompute image and verdict from an example's provenance seeds and tokens."""
    scene = sample_scene(example.scene_seed, scene_config(caption_type, canvas))
    return render(scene), evaluate(scene, example.caption())


def _generate(caption_type: str, split: str, start: int, stop: int, master_seed: int, canvas: int) -> list[Example]:
    return [make_example(caption_type, split, i, master_seed, canvas)[0] for i in range(start, stop)]


def _split_examples(caption_type, split, count, master_seed, canvas, workers) -> Iterator[Example]:
    chunk = 1000
    ranges = [(s, min(s + chunk, count)) for s in range(0, count, chunk)]
    if workers <= 1:
        for start, stop in ranges:
            yield from _generate(caption_type, split, start, stop, master_seed, canvas)
        return
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(workers) as pool:
        # map preserves index order regardless of scheduling
        for part in pool.map(_generate, *zip(*[(caption_type, split, s, e, master_seed, canvas)
                                               for s, e in ranges])):
            yield from part


def build_dataset(caption_type: str, n_train: int, n_val: int, master_seed: int, out: str | Path,
                  canvas: int = 64, shard_size: int = 50_000, workers: int = 1,
                  png_dir: str | Path | None = None, png_count: int = 32) -> dict:
    """Generate train/val shards plus ``manifest.json`` and ``vocab.json`` under ``out``."""
    if caption_type not in CAPTION_TYPES:
        raise ValueError(f"unknown caption type {caption_type!r}")
    if n_train < 1 or n_val < 1:
        raise ValueError("n_train and n_val must be at least 1")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    shards = {}
    for split, count in (("train", n_train), ("val", n_val)):
        stream = _split_examples(caption_type, split, count, master_seed, canvas, workers)
        shards[split] = []
        for k, start in enumerate(range(0, count, shard_size)):
            n = min(shard_size, count - start)
            name = f"{split}-{k:05d}.bin"
            digest = write_examples(out / name, (next(stream) for _ in range(n)), canvas)
            shards[split].append({"file": name, "count": n, "sha256": digest})
            log.info("wrote %s (%d records)", name, n)
    VOCABULARY.to_json(out / "vocab.json")
    manifest = {
        "format_version": FORMAT_VERSION,
        "caption_type": caption_type,
        "master_seed": master_seed,
        "canvas": canvas,
        "max_length": MAX_LENGTH,
        "counts": {"train": n_train, "val": n_val},
        "relations": list(relation_kinds(caption_type)),
        "vocabulary": list(VOCABULARY.words),
        "shards": shards,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    if png_dir is not None:
        export_pngs(out, png_dir, png_count)
    return manifest


def export_pngs(data_dir: str | Path, png_dir: str | Path, count: int = 32, split: str = "val") -> None:
    png_dir = Path(png_dir)
    png_dir.mkdir(parents=True, exist_ok=True)
    ds = Dataset(data_dir, split)
    lines = []
    for i in range(min(count, len(ds))):
        ex = ds.example(i)
        save_png(ex.image, png_dir / f"{split}-{i:05d}.png")
        lines.append(f"{split}-{i:05d}.png\t{int(ex.label)}\t{' '.join(ex.tokens(ds.vocabulary))}")
    (png_dir / "captions.tsv").write_text("\n".join(lines) + "\n")


# -- reading for training ------------------------------------------------------------------

@dataclass
class Batch:
    images: np.ndarray
    token_ids: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


class Dataset:
    """Random access to one split through memory-mapped shards."""

    def __init__(self, directory: str | Path, split: str = "train", verify: bool = True):
        self.directory = Path(directory)
        manifest_path = self.directory / "manifest.json"
        if not manifest_path.exists():
            raise DatasetError(f"{self.directory}: no manifest.json")
        self.manifest = json.loads(manifest_path.read_text())
        if self.manifest.get("format_version") != FORMAT_VERSION:
            raise VersionError(f"manifest format {self.manifest.get('format_version')}, expected {FORMAT_VERSION}")
        self.split = split
        self.caption_type = self.manifest["caption_type"]
        self.canvas = self.manifest["canvas"]
        self.vocabulary = Vocabulary(self.manifest["vocabulary"])
        self.records = []
        for shard in self.manifest["shards"][split]:
            path = self.directory / shard["file"]
            if verify and shard_checksum(path) != shard["sha256"]:
                raise ChecksumError(f"{path}: checksum differs from manifest")
            recs = memmap_records(path, verify)
            if len(recs) != shard["count"]:
                raise DatasetError(f"{path}: {len(recs)} records, manifest says {shard['count']}")
            self.records.append(recs)
        self.offsets = np.cumsum([0] + [len(r) for r in self.records])

    def __len__(self) -> int:
        return int(self.offsets[-1])

    def _locate(self, index: int):
        k = int(np.searchsorted(self.offsets, index, side="right") - 1)
        return self.records[k][index - self.offsets[k]]

    def example(self, index: int) -> Example:
        return _example_from(self._locate(index))

    def gather(self, indices: Sequence[int]) -> Batch:
        indices = np.asarray(indices)
        if len(self.records) == 1:
            recs = self.records[0][indices]
        else:
            recs = np.stack([self._locate(int(i)) for i in indices])
        return Batch(
            images=recs["image"].astype(np.float32) / 255.0,
            token_ids=recs["tokens"].astype(np.int64),
            lengths=recs["length"].astype(np.int64),
            labels=recs["label"].astype(np.int64),
            indices=indices,
        )

    def labels(self) -> np.ndarray:
        return np.concatenate([r["label"] for r in self.records]).astype(np.int64)

    def batches(self, batch_size: int, shuffle_seed: int | None = None,
                drop_last: bool = False) -> Iterator[Batch]:
        order = np.arange(len(self))
        if shuffle_seed is not None:
            order = np.random.default_rng(shuffle_seed).permutation(len(self))
        stop = len(order) - len(order) % batch_size if drop_last else len(order)
        for start in range(0, stop, batch_size):
            yield self.gather(order[start:start + batch_size])


def epoch_permutation(n: int, epoch_seed: int) -> np.ndarray:
    return np.random.default_rng(epoch_seed).permutation(n)


def batch_iterator(dataset: Dataset, batch_size: int, epoch_seed: int) -> Iterator[Batch]:
    """One epoch in a seed-determined order; the final short batch is dropped."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = epoch_permutation(len(dataset), epoch_seed)
    for start in range(0, len(order) - batch_size + 1, batch_size):
        yield dataset.gather(order[start:start + batch_size])


def batches_per_epoch(n: int, batch_size: int) -> int:
    return n // batch_size
