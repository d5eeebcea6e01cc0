"""Seeded generation and serialization of vectorized PVR datasets.

Example ``i`` of a dataset is drawn from stream ``i`` of the dataset seed, so
output bytes do not depend on how generation is sharded.
"""

from __future__ import annotations

import csv
import enum
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pvrkit import rng
from pvrkit.core import AggregationKind, TaskSpec, label_rows
from pvrkit.errors import (
    BadMagic,
    OutOfCapacity,
    RecordInvariantError,
    TruncatedFile,
    UnsupportedAggregation,
    UnsupportedVersion,
    UsageError,
    ValidationError,
)

MAGIC = b"PVR1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4s7IQQ")
CHUNK = 1 << 16


class ShiftTag(enum.IntEnum):
    IID = 0
    HOLDOUT_TRAIN = 1
    HOLDOUT_ADVERSARIAL_TEST = 2
    DSHIFT_TEST = 3


@dataclass(frozen=True)
class Example:
    digits: tuple[int, ...]
    label: int


@dataclass(eq=False)
class Dataset:
    spec: TaskSpec
    seed: int
    digits: np.ndarray  # (count, seq_len) uint8
    labels: np.ndarray  # (count,) uint8
    shift: ShiftTag = ShiftTag.IID
    generator: str = rng.ALGORITHM
    version: int = FORMAT_VERSION
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.digits = np.ascontiguousarray(self.digits, dtype=np.uint8).reshape(-1, self.spec.seq_len)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8).reshape(-1)
        if len(self.digits) != len(self.labels):
            raise ValidationError("digit and label counts differ")
        self.shift = ShiftTag(self.shift)

    @property
    def count(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> Example:
        return Example(tuple(int(d) for d in self.digits[i]), int(self.labels[i]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.seed == other.seed
            and self.shift == other.shift
            and np.array_equal(self.digits, other.digits)
            and np.array_equal(self.labels, other.labels)
        )

    def validate(self) -> None:
        """Raise if any record breaks the digit range or the labeling rule."""
        if self.count == 0:
            return
        if self.digits.max() >= self.spec.K or self.labels.max() >= self.spec.K:
            raise RecordInvariantError("digit outside vocabulary")
        bad = np.flatnonzero(label_rows(self.digits, self.spec) != self.labels)
        if bad.size:
            raise RecordInvariantError(f"{bad.size} record(s) fail relabeling, first at index {bad[0]}")


def sample_example(stream: rng.RngStream, spec: TaskSpec) -> Example:
    digits = [stream.next_digit(spec.K) for _ in range(spec.seq_len)]
    return Example(tuple(digits), int(label_rows(np.array([digits]), spec)[0]))


def sample_digits(spec: TaskSpec, seed: int, streams: np.ndarray) -> np.ndarray:
    """iid digit rows for the given stream indices, matching :func:`sample_example`."""
    return rng.bounded_columns(seed, streams, [spec.K] * spec.seq_len).astype(np.uint8)


def digit_chunk(args: tuple[TaskSpec, int, int, int]) -> np.ndarray:
    spec, seed, start, stop = args
    return sample_digits(spec, seed, np.arange(start, stop, dtype=np.uint64))


def map_chunks(fn, spec: TaskSpec, seed: int, start: int, stop: int, workers: int = 1) -> list:
    jobs = [(spec, seed, a, min(a + CHUNK, stop)) for a in range(start, stop, CHUNK)]
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def default_workers() -> int:
    return max(1, int(os.environ.get("PVR_WORKERS", "1")))


def generate(spec: TaskSpec, n: int, seed: int, workers: int = 1) -> Dataset:
    if n < 1:
        raise UsageError("dataset size must be at least 1")
    try:
        parts = map_chunks(digit_chunk, spec, seed, 0, n, workers)
        digits = np.concatenate(parts) if parts else np.zeros((0, spec.seq_len), np.uint8)
        labels = label_rows(digits, spec)
    except MemoryError as exc:
        raise OutOfCapacity(f"cannot hold {n} examples in memory") from exc
    return Dataset(spec, seed, digits, labels, ShiftTag.IID)


# -- PVR1 binary format ------------------------------------------------------


def encode_pvr(ds: Dataset) -> bytes:
    spec = ds.spec
    head = HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        spec.K,
        spec.seq_len,
        spec.pointer_count,
        spec.m,
        int(spec.aggregation),
        int(ds.shift),
        ds.count,
        ds.seed & ((1 << 64) - 1),
    )
    records = np.concatenate([ds.digits, ds.labels[:, None]], axis=1)
    return head + records.tobytes()


def write_pvr(ds: Dataset, path: str | os.PathLike) -> None:
    Path(path).write_bytes(encode_pvr(ds))


def decode_pvr(buf: bytes, verify: bool = True) -> Dataset:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    if len(buf) < HEADER.size:
        raise TruncatedFile("file ends inside the header")
    _, version, K, seq_len, ptrs, m, agg, shift, count, seed = HEADER.unpack_from(buf)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version} not supported")
    if agg not in AggregationKind._value2member_map_:
        raise UnsupportedAggregation(f"aggregation id {agg} not supported")
    if shift not in ShiftTag._value2member_map_:
        raise ValidationError(f"unknown shift tag {shift}")
    try:
        spec = TaskSpec(m=m, aggregation=AggregationKind(agg), K=K, pointer_count=ptrs)
    except UsageError as exc:
        raise ValidationError(f"header out of range: {exc}") from None
    if seq_len != spec.seq_len:
        raise ValidationError(f"sequence length {seq_len} does not match layout {spec.seq_len}")
    rec = seq_len + 1
    body = memoryview(buf)[HEADER.size :]
    if len(body) < count * rec:
        raise TruncatedFile(f"expected {count} records, file holds {len(body) // rec}")
    if len(body) > count * rec:
        raise ValidationError("trailing bytes after the last record")
    records = np.frombuffer(body, dtype=np.uint8).reshape(count, rec)
    ds = Dataset(spec, seed, records[:, :seq_len].copy(), records[:, seq_len].copy(), ShiftTag(shift))
    if verify:
        ds.validate()
    return ds


def read_pvr(path: str | os.PathLike, verify: bool = True) -> Dataset:
    """Read a PVR1 file; with ``verify`` every record is checked against the rule."""
    return decode_pvr(Path(path).read_bytes(), verify=verify)


def export_csv(ds: Dataset, path: str | os.PathLike) -> None:
    header = [f"x{i}" for i in range(ds.spec.seq_len)] + ["y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(np.concatenate([ds.digits, ds.labels[:, None]], axis=1).tolist())


def read_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array(rows[1:], dtype=np.int64).reshape(len(rows) - 1, len(rows[0]))
    return body[:, :-1], body[:, -1]
