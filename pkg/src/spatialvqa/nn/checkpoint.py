"""Versioned little-endian checkpoint files.

Layout::

    magic    8 bytes  b"SVQACKPT"
    version  u32
    meta     u32 length + UTF-8 JSON (model config, iteration, ...)
    count    u32 number of named arrays
    per array: u16 name length, name, u8 ndim, u32 dims..., float32 payload
    step     u64 optimizer step count
    per array (same order, parameters only): float32 first moment, float32 second moment
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SVQACKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_array(fh, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", array.ndim))
    fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read(fh, fmt: str):
    size = struct.calcsize(fmt)
    raw = fh.read(size)
    if len(raw) != size:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack(fmt, raw)


def _read_array(fh) -> tuple[str, np.ndarray]:
    (length,) = _read(fh, "<H")
    name = fh.read(length).decode("utf-8")
    (ndim,) = _read(fh, "<B")
    shape = _read(fh, f"<{ndim}I") if ndim else ()
    count = int(np.prod(shape)) if shape else 1
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise CheckpointError(f"truncated payload for {name}")
    return name, np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict,
                    optimizer_state: dict | None = None) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, array in arrays.items():
            _write_array(fh, name, np.asarray(array))
        state = optimizer_state or {"step": 0, "m": [], "v": []}
        fh.write(struct.pack("<Q", int(state["step"])))
        fh.write(struct.pack("<I", len(state["m"])))
        for i, (m, v) in enumerate(zip(state["m"], state["v"])):
            _write_array(fh, f"m.{i}", m)
            _write_array(fh, f"v.{i}", v)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict, dict]:
    """Return ``(arrays, meta, optimizer_state)``."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint")
        (version,) = _read(fh, "<I")
        if version != VERSION:
            raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
        (length,) = _read(fh, "<I")
        meta = json.loads(fh.read(length).decode("utf-8"))
        (count,) = _read(fh, "<I")
        arrays = dict(_read_array(fh) for _ in range(count))
        (step,) = _read(fh, "<Q")
        (n_state,) = _read(fh, "<I")
        m, v = [], []
        for _ in range(n_state):
            m.append(_read_array(fh)[1])
            v.append(_read_array(fh)[1])
    return arrays, meta, {"step": step, "m": m, "v": v}
