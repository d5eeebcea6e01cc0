"""Labeling rule for vectorized pointer-value retrieval.

A sequence holds one pointer digit followed by ``V`` value slots. The pointer
selects a window of ``m + 1`` consecutive slots (wrapping modulo ``V``) and the
label is an aggregate of the digits found there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from pvrkit.errors import InvalidComplexity, InvalidWindow, UsageError

VALUE_SLOTS = 10
POINTER_COUNT = 1


class AggregationKind(enum.IntEnum):
    MOD_SUM = 0
    MEDIAN = 1
    MAJ_VOTE = 2
    MIN = 3
    MAX = 4

    @classmethod
    def parse(cls, name: str | int | "AggregationKind") -> "AggregationKind":
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            try:
                return cls(int(name))
            except ValueError:
                raise UsageError(f"unknown aggregation id {name}") from None
        key = str(name).strip().upper().replace("-", "_")
        if key in ("MAJVOTE", "MAJORITY"):
            key = "MAJ_VOTE"
        try:
            return cls[key]
        except KeyError:
            raise UsageError(f"unknown aggregation {name!r}") from None

    @property
    def slug(self) -> str:
        return self.name.lower()


class BlockPosition(enum.Enum):
    UPPER_RIGHT = "upper_right"
    LOWER_LEFT = "lower_left"
    LOWER_RIGHT = "lower_right"


@dataclass(frozen=True)
class TaskSpec:
    """Vocabulary, layout and labeling rule of one PVR task."""

    m: int = 0
    aggregation: AggregationKind = AggregationKind.MOD_SUM
    K: int = 10
    V: int = VALUE_SLOTS
    pointer_count: int = POINTER_COUNT

    def __post_init__(self) -> None:
        object.__setattr__(self, "aggregation", AggregationKind.parse(self.aggregation))
        if self.V != VALUE_SLOTS or self.pointer_count != POINTER_COUNT:
            raise UsageError("only one pointer and 10 value slots are supported")
        # pointers are digits, so a vocabulary wider than V could name missing slots
        if not 2 <= self.K <= self.V:
            raise UsageError(f"vocabulary size must be in [2, {self.V}], got {self.K}")
        if not 0 <= self.m <= self.V - 1:
            raise InvalidComplexity(f"complexity m={self.m} needs a window of {self.m + 1} slots; only {self.V} exist")

    @property
    def seq_len(self) -> int:
        return self.pointer_count + self.V

    @property
    def window_size(self) -> int:
        return self.m + 1


def window_slots(pointer: int, m: int, V: int = VALUE_SLOTS) -> list[int]:
    if not 0 <= m <= V - 1:
        raise InvalidComplexity(f"complexity m={m} does not fit in {V} slots")
    if not 0 <= pointer < V:
        raise InvalidWindow(f"pointer {pointer} outside [0, {V})")
    return [(pointer + j) % V for j in range(m + 1)]


def aggregate(values: Sequence[int], kind: AggregationKind, K: int = 10) -> int:
    if len(values) == 0:
        raise InvalidWindow("cannot aggregate an empty window")
    arr = np.asarray(values, dtype=np.int64)[None, :]
    return int(aggregate_rows(arr, kind, K)[0])


def aggregate_rows(windows: np.ndarray, kind: AggregationKind, K: int = 10) -> np.ndarray:
    """Aggregate each row of an (N, w) integer array; returns int64 of shape (N,)."""
    kind = AggregationKind(kind)
    w = np.asarray(windows)
    if w.ndim != 2 or w.shape[1] == 0:
        raise InvalidWindow("windows must be a nonempty 2-d array")
    if kind is AggregationKind.MOD_SUM:
        return w.sum(axis=1, dtype=np.int64) % K
    if kind is AggregationKind.MIN:
        return w.min(axis=1).astype(np.int64)
    if kind is AggregationKind.MAX:
        return w.max(axis=1).astype(np.int64)
    if kind is AggregationKind.MEDIAN:
        lower = (w.shape[1] - 1) // 2
        return np.sort(w, axis=1)[:, lower].astype(np.int64)
    # argmax returns the first maximum, i.e. the smallest modal value
    counts = (w[:, :, None] == np.arange(K)).sum(axis=1)
    return counts.argmax(axis=1).astype(np.int64)


def window_index(pointers: np.ndarray, m: int, V: int = VALUE_SLOTS) -> np.ndarray:
    """Column indices (into a full sequence) of each row's window, shape (N, m+1)."""
    offsets = np.arange(m + 1)
    return POINTER_COUNT + (np.asarray(pointers, dtype=np.int64)[:, None] + offsets) % V


def windows_of(digits: np.ndarray, spec: TaskSpec) -> np.ndarray:
    """Window contents of each sequence in an (N, 11) array, in slot order."""
    digits = np.asarray(digits)
    cols = window_index(digits[:, 0], spec.m, spec.V)
    return np.take_along_axis(digits, cols, axis=1)


def label_rows(digits: np.ndarray, spec: TaskSpec) -> np.ndarray:
    """Labels for every sequence of an (N, 11) digit array."""
    digits = np.asarray(digits)
    if digits.ndim != 2 or digits.shape[1] != spec.seq_len:
        raise UsageError(f"expected sequences of length {spec.seq_len}")
    if digits.size and (digits.min() < 0 or digits.max() >= spec.K):
        raise UsageError("digit outside vocabulary")
    if digits.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if digits[:, 0].max() >= spec.V:
        raise InvalidWindow(f"pointer outside [0, {spec.V})")
    return aggregate_rows(windows_of(digits, spec), spec.aggregation, spec.K)


def label_of(seq: Iterable[int], spec: TaskSpec) -> int:
    row = np.asarray(list(seq), dtype=np.int64)[None, :]
    return int(label_rows(row, spec)[0])


def block_position_of(pointer: int) -> BlockPosition:
    if not 0 <= pointer < 10:
        raise UsageError(f"pointer digit {pointer} outside [0, 10)")
    if pointer <= 3:
        return BlockPosition.UPPER_RIGHT
    if pointer <= 6:
        return BlockPosition.LOWER_LEFT
    return BlockPosition.LOWER_RIGHT
