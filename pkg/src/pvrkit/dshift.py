"""Distribution-shift splits.

Two constructions live here. For complexity ``m`` the permutation holdout keeps
ordered window tuples drawn from the permutations of ``(0, ..., m)`` out of
training, and an adversarial test set places ``(0, ..., m)`` in every window.
For the visual block task a positional rule bars certain digit classes from
each value cell during training and keeps only those classes at test time.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from pvrkit.core import BlockPosition, TaskSpec, label_rows, window_index, windows_of
from pvrkit.errors import BudgetExceeded, InfeasibleHoldout, UsageError, ValidationError
from pvrkit.taskgen import CHUNK, Dataset, ShiftTag, digit_chunk, map_chunks

MAX_PERM_M = 7
MIN_ACCEPTANCE = 1e-6


def perm_list(m: int) -> list[tuple[int, ...]]:
    if m < 0:
        raise UsageError("complexity must be nonnegative")
    if m > MAX_PERM_M:
        raise BudgetExceeded(f"(m+1)! = {math.factorial(m + 1)} permutations exceeds the m <= {MAX_PERM_M} budget")
    return list(itertools.permutations(range(m + 1)))


@dataclass(frozen=True)
class HoldoutSpec:
    m: int
    heldout: frozenset[tuple[int, ...]]
    order: tuple[tuple[int, ...], ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        ident = tuple(range(self.m + 1))
        if ident not in self.heldout:
            raise ValidationError("heldout set must contain the identity tuple")
        for t in self.heldout:
            if sorted(t) != list(ident):
                raise ValidationError(f"{t} is not a permutation of {ident}")
        if not self.order:
            object.__setattr__(self, "order", tuple(sorted(self.heldout)))

    @property
    def tag(self) -> str:
        return f"holdout-{len(self.heldout)}"

    def contains_rows(self, windows: np.ndarray) -> np.ndarray:
        """Boolean mask: which rows of an (N, m+1) window array are held out."""
        windows = np.asarray(windows, dtype=np.int64)
        if windows.shape[1] != self.m + 1:
            raise ValidationError("window width does not match holdout complexity")
        # encode each tuple as a base-(m+1) integer; entries outside [0, m] never match
        base = self.m + 1
        inside = (windows <= self.m).all(axis=1)
        codes = (np.where(windows <= self.m, windows, 0) * base ** np.arange(self.m, -1, -1)).sum(axis=1)
        held = np.array([sum(d * base ** (self.m - k) for k, d in enumerate(t)) for t in self.heldout])
        return inside & np.isin(codes, held)

    def to_json(self) -> dict:
        return {"m": self.m, "tag": self.tag, "heldout": [list(t) for t in self.order]}

    @classmethod
    def from_json(cls, doc: dict) -> "HoldoutSpec":
        order = tuple(tuple(int(d) for d in t) for t in doc["heldout"])
        return cls(int(doc["m"]), frozenset(order), order)


def holdout_set(m: int, i: int) -> HoldoutSpec:
    perms = perm_list(m)
    if not 1 <= i <= len(perms):
        raise UsageError(f"holdout size i={i} outside [1, {len(perms)}] for m={m}")
    chosen = tuple(perms[:i])
    return HoldoutSpec(m, frozenset(chosen), chosen)


def acceptance_probability(spec: TaskSpec, hs: HoldoutSpec) -> float:
    return 1.0 - len(hs.heldout) / spec.K ** (spec.m + 1)


def gen_train_holdout(spec: TaskSpec, hs: HoldoutSpec, n: int, seed: int, workers: int = 1) -> Dataset:
    """Rejection-sample ``n`` training examples whose window avoids ``hs``.

    Candidate ``j`` comes from stream ``j``; candidates are scanned in stream
    order and the first ``n`` accepted ones are kept.
    """
    if spec.m != hs.m:
        raise UsageError(f"task complexity {spec.m} does not match holdout complexity {hs.m}")
    if n < 1:
        raise UsageError("dataset size must be at least 1")
    p = acceptance_probability(spec, hs)
    if p < MIN_ACCEPTANCE:
        raise InfeasibleHoldout(f"acceptance probability {p:.3g} too small")
    kept: list[np.ndarray] = []
    have = 0
    start = 0
    while have < n:
        # overshoot the expected need so one or two rounds normally suffice
        want = int((n - have) / p * 1.05) + 64
        stop = start + -(-want // CHUNK) * CHUNK
        for cand in map_chunks(digit_chunk, spec, seed, start, stop, workers):
            ok = cand[~hs.contains_rows(windows_of(cand, spec))]
            kept.append(ok)
            have += len(ok)
        start = stop
    digits = np.concatenate(kept)[:n]
    ds = Dataset(spec, seed, digits, label_rows(digits, spec), ShiftTag.HOLDOUT_TRAIN)
    ds.meta["holdout"] = hs.to_json()
    ds.meta["candidates_scanned"] = start
    return ds


def gen_adversarial_test(spec: TaskSpec, n: int, seed: int, workers: int = 1) -> Dataset:
    if n < 1:
        raise UsageError("dataset size must be at least 1")
    parts = map_chunks(digit_chunk, spec, seed, 0, n, workers)
    digits = np.concatenate(parts).astype(np.uint8)
    cols = window_index(digits[:, 0], spec.m, spec.V)
    np.put_along_axis(digits, cols, np.arange(spec.m + 1, dtype=np.uint8)[None, :], axis=1)
    ds = Dataset(spec, seed, digits, label_rows(digits, spec), ShiftTag.HOLDOUT_ADVERSARIAL_TEST)
    return ds


@dataclass
class DisjointReport:
    checked: int
    violations: list[int]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_disjoint(train: Dataset, hs: HoldoutSpec) -> DisjointReport:
    if train.spec.m != hs.m:
        raise UsageError(f"dataset complexity {train.spec.m} does not match holdout complexity {hs.m}")
    if train.count == 0:
        return DisjointReport(0, [])
    mask = hs.contains_rows(windows_of(train.digits, train.spec))
    return DisjointReport(train.count, np.flatnonzero(mask).tolist())


# -- visual positional holdout ----------------------------------------------


class Phase(enum.Enum):
    TRAIN = "train"
    DSHIFT_TEST = "dshift_test"
    HOLDOUT_TEST = "holdout_test"


class Cell(enum.Enum):
    POINTER = "pointer"
    UPPER_RIGHT = BlockPosition.UPPER_RIGHT.value
    LOWER_LEFT = BlockPosition.LOWER_LEFT.value
    LOWER_RIGHT = BlockPosition.LOWER_RIGHT.value


VALUE_CELLS = (Cell.UPPER_RIGHT, Cell.LOWER_LEFT, Cell.LOWER_RIGHT)
ALL_DIGITS = frozenset(range(10))


@dataclass(frozen=True)
class PositionalHoldoutRule:
    excluded: dict

    @classmethod
    def default(cls) -> "PositionalHoldoutRule":
        return cls(
            {
                Cell.UPPER_RIGHT: frozenset({1, 2, 3}),
                Cell.LOWER_LEFT: frozenset({4, 5, 6}),
                Cell.LOWER_RIGHT: frozenset({7, 8, 9, 0}),
            }
        )


def visual_split_plan(rule: PositionalHoldoutRule, phase: Phase) -> dict[Cell, frozenset[int]]:
    phase = Phase(phase)
    plan = {Cell.POINTER: ALL_DIGITS}
    for cell in VALUE_CELLS:
        ex = frozenset(rule.excluded.get(cell, ()))
        if phase is Phase.TRAIN:
            plan[cell] = ALL_DIGITS - ex
        elif phase is Phase.HOLDOUT_TEST:
            plan[cell] = ex
        else:
            plan[cell] = ALL_DIGITS
    return plan


def iid_plan() -> dict[Cell, frozenset[int]]:
    return {c: ALL_DIGITS for c in Cell}
