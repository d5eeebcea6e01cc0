"""Brute-force reference checks.

Nothing here calls into :mod:`pvrkit.core` beyond its types. Labels are
recomputed with explicit loops so that a bug in the vectorized rule cannot hide
behind a shared helper.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field

from pvrkit.core import AggregationKind, TaskSpec
from pvrkit.errors import BudgetExceeded, ValidationError

ENUMERATION_BUDGET = 10**7


def _naive_aggregate(window: list[int], kind: AggregationKind, K: int) -> int:
    if kind == AggregationKind.MOD_SUM:
        total = 0
        for v in window:
            total += v
        return total % K
    if kind == AggregationKind.MIN:
        best = window[0]
        for v in window:
            if v < best:
                best = v
        return best
    if kind == AggregationKind.MAX:
        best = window[0]
        for v in window:
            if v > best:
                best = v
        return best
    if kind == AggregationKind.MEDIAN:
        ordered = sorted(window)
        return ordered[(len(ordered) - 1) // 2]
    if kind == AggregationKind.MAJ_VOTE:
        tally = Counter(window)
        top = max(tally.values())
        return min(v for v, c in tally.items() if c == top)
    raise ValidationError(f"unknown aggregation {kind}")


def reference_label(seq, spec: TaskSpec) -> int:
    seq = [int(d) for d in seq]
    if len(seq) != 1 + spec.V:
        raise ValidationError("sequence length does not match the task layout")
    pointer = seq[0]
    values = seq[1:]
    scratch = []
    slot = pointer
    for _ in range(spec.m + 1):
        scratch.append(values[slot])
        slot += 1
        if slot == spec.V:
            slot = 0
    return _naive_aggregate(scratch, spec.aggregation, spec.K)


def _tuples(K: int, length: int):
    """All length-``length`` tuples over range(K) in lexicographic order."""
    cur = [0] * length
    while True:
        yield cur
        i = length - 1
        while i >= 0 and cur[i] == K - 1:
            cur[i] = 0
            i -= 1
        if i < 0:
            return
        cur[i] += 1


def label_distribution(spec: TaskSpec) -> list[int]:
    """Label counts over every pointer and every window content."""
    if spec.K ** (spec.m + 2) > ENUMERATION_BUDGET:
        raise BudgetExceeded(f"K^(m+2) = {spec.K ** (spec.m + 2)} exceeds the budget of {ENUMERATION_BUDGET}")
    counts = [0] * spec.K
    # the window is the only thing the label sees, so one pass over window
    # contents counts every pointer identically
    for window in _tuples(spec.K, spec.m + 1):
        counts[_naive_aggregate(window, spec.aggregation, spec.K)] += spec.V
    return counts


@dataclass
class AuditReport:
    checked: int = 0
    mismatches: list[int] = field(default_factory=list)
    holdout_violations: list[int] = field(default_factory=list)
    label_histogram: list[int] = field(default_factory=list)
    out_of_range: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.mismatches or self.holdout_violations or self.out_of_range)

    def to_json(self) -> str:
        doc = asdict(self)
        doc["ok"] = self.ok
        return json.dumps(doc, indent=2)


def check_dataset(ds, hs=None) -> AuditReport:
    """Relabel every record of ``ds``; optionally check windows against a holdout spec."""
    spec = ds.spec
    if hs is not None and hs.m != spec.m:
        raise ValidationError(f"holdout complexity {hs.m} does not match dataset complexity {spec.m}")
    held = set(hs.heldout) if hs is not None else set()
    report = AuditReport(label_histogram=[0] * spec.K)
    for i, (row, label) in enumerate(zip(ds.digits.tolist(), ds.labels.tolist())):
        report.checked += 1
        if label < spec.K:
            report.label_histogram[label] += 1
        if any(d >= spec.K for d in row) or row[0] >= spec.V or label >= spec.K:
            report.out_of_range.append(i)
            continue
        if reference_label(row, spec) != label:
            report.mismatches.append(i)
        if held:
            values = row[1:]
            window = tuple(values[(row[0] + j) % spec.V] for j in range(spec.m + 1))
            if window in held:
                report.holdout_violations.append(i)
    return report


def all_windows_equal(ds, target: tuple[int, ...]) -> bool:
    spec = ds.spec
    for row in ds.digits.tolist():
        values = row[1:]
        if tuple(values[(row[0] + j) % spec.V] for j in range(spec.m + 1)) != tuple(target):
            return False
    return True
