"""Visual PVR composition from IDX digit banks.

Block style places four digit images in a 2x2 grid of 40x40 cells: the top-left
cell is the pointer and its class picks one of the other three cells. Sequential
style lays out eleven cells in a row; the leftmost is the pointer. Each 28x28
digit is pasted at a random integer offset inside its cell.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pvrkit import rng
from pvrkit.core import block_position_of
from pvrkit.dshift import ALL_DIGITS, Cell
from pvrkit.errors import BadMagic, CountMismatch, TruncatedFile, UsageError, ValidationError

CELL = 40
DIGIT = 28
JITTER = CELL - DIGIT  # offsets are drawn from [0, JITTER]
BLOCK_CELLS = (Cell.POINTER, Cell.UPPER_RIGHT, Cell.LOWER_LEFT, Cell.LOWER_RIGHT)
BLOCK_ORIGIN = {
    Cell.POINTER: (0, 0),
    Cell.UPPER_RIGHT: (0, CELL),
    Cell.LOWER_LEFT: (CELL, 0),
    Cell.LOWER_RIGHT: (CELL, CELL),
}
SEQ_CELLS = 11
CHUNK = 4096

# -- IDX container -----------------------------------------------------------

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {np.dtype(v).newbyteorder("="): k for k, v in _IDX_TYPES.items()}
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def encode_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    code = _IDX_CODES.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise UsageError(f"dtype {arr.dtype} has no IDX type code")
    head = struct.pack(">HBB", 0, code, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + arr.astype(_IDX_TYPES[code], copy=False).tobytes()


def decode_idx(buf: bytes, expect_magic: int | None = None) -> np.ndarray:
    if len(buf) < 4:
        raise TruncatedFile("IDX header truncated")
    zero, code, ndim = struct.unpack_from(">HBB", buf)
    magic = (code << 8) | ndim
    if zero != 0 or code not in _IDX_TYPES or (expect_magic is not None and magic != expect_magic):
        want = f"0x{expect_magic:08x}" if expect_magic is not None else "a valid IDX magic"
        raise BadMagic(f"IDX magic 0x{struct.unpack_from('>I', buf)[0]:08x}, expected {want}")
    if len(buf) < 4 + 4 * ndim:
        raise TruncatedFile("IDX dimension table truncated")
    shape = struct.unpack_from(f">{ndim}I", buf, 4)
    dt = _IDX_TYPES[code]
    need = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    body = buf[4 + 4 * ndim :]
    if len(body) < need:
        raise TruncatedFile(f"IDX body holds {len(body)} bytes, header promises {need}")
    if len(body) > need:
        raise ValidationError("trailing bytes after IDX body")
    return np.frombuffer(body, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def write_idx(path: str | os.PathLike, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_idx(arr))


def read_idx_array(path: str | os.PathLike, expect_magic: int | None = None) -> np.ndarray:
    return decode_idx(Path(path).read_bytes(), expect_magic)


# -- banks ---------------------------------------------------------------------


@dataclass
class ImageBank:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8
    pools: list[np.ndarray] = field(init=False, repr=False)
    digest: str = field(init=False)

    def __post_init__(self) -> None:
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.images.ndim != 3 or self.images.shape[1:] != (DIGIT, DIGIT):
            raise ValidationError(f"images must be N x {DIGIT} x {DIGIT}, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise CountMismatch(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and self.labels.max() >= 10:
            raise ValidationError(f"label {int(self.labels.max())} outside [0, 10)")
        self.pools = [np.flatnonzero(self.labels == c) for c in range(10)]
        empty = [c for c, p in enumerate(self.pools) if len(p) == 0]
        if empty:
            raise ValidationError(f"no images for classes {empty}")
        h = hashlib.sha256()
        h.update(self.images.tobytes())
        h.update(self.labels.tobytes())
        self.digest = h.hexdigest()

    def __len__(self) -> int:
        return len(self.labels)


def read_idx(images_path: str | os.PathLike, labels_path: str | os.PathLike) -> ImageBank:
    images = read_idx_array(images_path, IMAGES_MAGIC)
    labels = read_idx_array(labels_path, LABELS_MAGIC)
    return ImageBank(images, labels)


# -- composition -----------------------------------------------------------------


@dataclass(eq=False)
class ComposedDataset:
    images: np.ndarray  # (M, H, W) uint8
    labels: np.ndarray  # (M,) uint8
    cells: np.ndarray  # (M, n_cells, 4) int32: class, bank index, dy, dx
    manifest: dict

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ComposedDataset):
            return NotImplemented
        return (
            np.array_equal(self.images, other.images)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.cells, other.cells)
            and self.manifest == other.manifest
        )


def _cell_origins(style: str) -> list[tuple[int, int]]:
    if style == "block":
        return [BLOCK_ORIGIN[c] for c in BLOCK_CELLS]
    return [(0, CELL * k) for k in range(SEQ_CELLS)]


def canvas_shape(style: str) -> tuple[int, int]:
    return (2 * CELL, 2 * CELL) if style == "block" else (CELL, CELL * SEQ_CELLS)


def _normalize_plan(plan: dict) -> dict[Cell, tuple[int, ...]]:
    out = {}
    for cell in BLOCK_CELLS:
        allowed = plan.get(cell, plan.get(cell.value))
        if allowed is None:
            raise UsageError(f"plan has no entry for {cell.value}")
        allowed = tuple(sorted(int(d) for d in allowed))
        if not allowed:
            raise UsageError(f"empty allowed set for {cell.value}")
        if allowed[0] < 0 or allowed[-1] > 9:
            raise UsageError(f"allowed digits for {cell.value} outside [0, 9]")
        out[cell] = allowed
    return out


def _draw_cells(bank: ImageBank, allowed: list[tuple[int, ...]], seed: int, start: int, stop: int) -> np.ndarray:
    """Per example and cell, in cell order: class, instance, dy, dx."""
    streams = np.arange(start, stop, dtype=np.uint64)
    walker = rng.DrawWalker(seed, streams, 4 * len(allowed) + 8)
    pool_sizes = np.array([len(p) for p in bank.pools])
    out = np.empty((len(streams), len(allowed), 4), dtype=np.int32)
    for k, cls in enumerate(allowed):
        classes = np.asarray(cls)[walker.take(len(cls))]
        inst = walker.take(pool_sizes[classes])
        out[:, k, 0] = classes
        out[:, k, 1] = [bank.pools[c][i] for c, i in zip(classes, inst)]
        out[:, k, 2] = walker.take(JITTER + 1)
        out[:, k, 3] = walker.take(JITTER + 1)
    return out


def _paint(bank: ImageBank, cells: np.ndarray, style: str) -> np.ndarray:
    H, W = canvas_shape(style)
    origins = _cell_origins(style)
    canvas = np.zeros((len(cells), H, W), dtype=np.uint8)
    for e in range(len(cells)):
        for k, (r0, c0) in enumerate(origins):
            _, idx, dy, dx = cells[e, k]
            canvas[e, r0 + dy : r0 + dy + DIGIT, c0 + dx : c0 + dx + DIGIT] = bank.images[idx]
    return canvas


def labels_from_cells(cells: np.ndarray, style: str) -> np.ndarray:
    classes = cells[:, :, 0]
    if style == "block":
        target = {Cell.UPPER_RIGHT.value: 1, Cell.LOWER_LEFT.value: 2, Cell.LOWER_RIGHT.value: 3}
        pick = np.array([target[block_position_of(p).value] for p in range(10)])[classes[:, 0]]
    else:
        pick = classes[:, 0] + 1
    return classes[np.arange(len(classes)), pick].astype(np.uint8)


_WORKER_BANK: ImageBank | None = None


def _init_worker(bank: ImageBank) -> None:
    global _WORKER_BANK
    _WORKER_BANK = bank


def _compose_chunk(args):
    allowed, seed, start, stop, style = args
    bank = _WORKER_BANK
    cells = _draw_cells(bank, allowed, seed, start, stop)
    return cells, _paint(bank, cells, style)


def _compose(bank: ImageBank, allowed: list[tuple[int, ...]], n: int, seed: int, style: str, workers: int):
    if n < 1:
        raise UsageError("dataset size must be at least 1")
    jobs = [(allowed, seed, a, min(a + CHUNK, n), style) for a in range(0, n, CHUNK)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(bank,)) as pool:
            parts = list(pool.map(_compose_chunk, jobs))
    else:
        _init_worker(bank)
        parts = [_compose_chunk(j) for j in jobs]
    cells = np.concatenate([p[0] for p in parts])
    if not np.array_equal(bank.labels[cells[:, :, 1]], cells[:, :, 0]):
        raise ValidationError("drawn instance disagrees with its drawn class")
    images = np.concatenate([p[1] for p in parts])
    return cells, images


def compose_block(bank: ImageBank, plan: dict, n: int, seed: int, workers: int = 1, plan_name: str = "custom") -> ComposedDataset:
    norm = _normalize_plan(plan)
    allowed = [norm[c] for c in BLOCK_CELLS]
    cells, images = _compose(bank, allowed, n, seed, "block", workers)
    labels = labels_from_cells(cells, "block")
    manifest = {
        "style": "block",
        "layout": {"cell": CELL, "digit": DIGIT, "canvas": list(canvas_shape("block")), "cells": [c.value for c in BLOCK_CELLS]},
        "source_digest": bank.digest,
        "plan_name": plan_name,
        "plan": {c.value: list(norm[c]) for c in BLOCK_CELLS},
        "seed": seed,
        "count": n,
        "generator": rng.ALGORITHM,
    }
    return ComposedDataset(images, labels, cells, manifest)


def compose_sequential(bank: ImageBank, n: int, seed: int, workers: int = 1) -> ComposedDataset:
    allowed = [tuple(sorted(ALL_DIGITS))] * SEQ_CELLS
    cells, images = _compose(bank, allowed, n, seed, "sequential", workers)
    labels = labels_from_cells(cells, "sequential")
    manifest = {
        "style": "sequential",
        "layout": {"cell": CELL, "digit": DIGIT, "canvas": list(canvas_shape("sequential")), "cells": SEQ_CELLS},
        "source_digest": bank.digest,
        "plan_name": "iid",
        "plan": {str(k): list(range(10)) for k in range(SEQ_CELLS)},
        "seed": seed,
        "count": n,
        "generator": rng.ALGORITHM,
    }
    return ComposedDataset(images, labels, cells, manifest)


def write_composed(ds: ComposedDataset, out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "images-idx3-ubyte", ds.images)
    write_idx(out / "labels-idx1-ubyte", ds.labels)
    write_idx(out / "cells-idx3-int", ds.cells.astype(np.int32))
    (out / "manifest.json").write_text(json.dumps(ds.manifest, indent=2, sort_keys=True) + "\n")


def read_composed(out_dir: str | os.PathLike) -> ComposedDataset:
    out = Path(out_dir)
    images = read_idx_array(out / "images-idx3-ubyte", IMAGES_MAGIC)
    labels = read_idx_array(out / "labels-idx1-ubyte", LABELS_MAGIC)
    cells = read_idx_array(out / "cells-idx3-int")
    manifest = json.loads((out / "manifest.json").read_text())
    if not len(images) == len(labels) == len(cells):
        raise CountMismatch("composed files disagree on example count")
    return ComposedDataset(images, labels, cells.astype(np.int32), manifest)
