"""Monte-Carlo noise sensitivity of PVR labeling rules over bit-encoded inputs.

Each digit is written as ``D`` bits (most significant first); random bit
patterns are mapped back into the vocabulary with ``mod K`` before labeling.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Union

import numpy as np

from pvrkit.core import AggregationKind, TaskSpec, label_rows
from pvrkit.errors import UsageError

Target = Union[TaskSpec, Callable[[np.ndarray], np.ndarray]]


def default_grid(points: int = 50, lo: float = -7.0, hi: float = -1.0) -> tuple[float, ...]:
    return tuple(float(d) for d in np.exp(np.linspace(lo, hi, points)))


@dataclass(frozen=True)
class BitCodec:
    K: int = 10
    seq_len: int = 11

    @property
    def D(self) -> int:
        return max(1, math.ceil(math.log2(self.K)))

    @property
    def n_bits(self) -> int:
        return self.seq_len * self.D

    def encode(self, digits) -> np.ndarray:
        digits = np.asarray(digits, dtype=np.int64)
        shifts = np.arange(self.D - 1, -1, -1)
        bits = (digits[..., None] >> shifts) & 1
        return bits.reshape(*digits.shape[:-1], self.n_bits).astype(np.uint8)

    def decode(self, bits) -> np.ndarray:
        bits = np.asarray(bits)
        if bits.shape[-1] != self.n_bits:
            raise UsageError(f"expected {self.n_bits} bits, got {bits.shape[-1]}")
        groups = bits.reshape(*bits.shape[:-1], self.seq_len, self.D).astype(np.uint16)
        value = np.zeros(groups.shape[:-1], dtype=np.uint16)
        for j in range(self.D):
            value = (value << 1) | groups[..., j]
        return (value % self.K).astype(np.int64)


@dataclass(frozen=True)
class NsConfig:
    samples: int = 10_000
    runs: int = 10
    grid: tuple[float, ...] = field(default_factory=default_grid)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.samples < 1 or self.runs < 1:
            raise UsageError("samples and runs must be positive")
        if not self.grid:
            raise UsageError("delta grid is empty")
        if any(not 0.0 < d < 1.0 for d in self.grid):
            raise UsageError("grid points must lie strictly between 0 and 1")


def _threshold(delta: float) -> int:
    if not 0.0 <= delta <= 1.0:
        raise UsageError(f"flip probability {delta} outside [0, 1]")
    return int(delta * 2.0**32)


def flip_with_draws(bits: np.ndarray, delta: float, draws: np.ndarray) -> np.ndarray:
    """Flip bit ``i`` iff the 32-bit draw ``i`` is below ``delta * 2^32``."""
    mask = draws.reshape(bits.shape).astype(np.uint64) < np.uint64(_threshold(delta))
    return bits ^ mask.astype(bits.dtype)


def _u32(gen: np.random.Philox, count: int) -> np.ndarray:
    words = gen.random_raw(-(-count // 2)).astype("<u8")
    return words.view("<u4")[:count]


def flip(bits, delta: float, stream) -> np.ndarray:
    """Flip each bit independently with probability ``delta``.

    ``stream`` is an :class:`~pvrkit.rng.RngStream`; one 32-bit draw is used per bit.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    draws = np.array([stream.next_u32() for _ in range(bits.size)], dtype=np.uint64)
    return flip_with_draws(bits, delta, draws)


def stream_id(target: Target, delta: float, run: int) -> int:
    if isinstance(target, TaskSpec):
        tag = f"{int(target.aggregation)}:{target.m}:{target.K}"
    else:
        tag = getattr(target, "__name__", "f")
    raw = f"ns|{tag}|{struct.pack('<d', float(delta)).hex()}|{run}".encode()
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "little")


def _labeler(target: Target) -> tuple[Callable[[np.ndarray], np.ndarray], BitCodec]:
    if isinstance(target, TaskSpec):
        return (lambda d: label_rows(d, target)), BitCodec(target.K, target.seq_len)
    return target, BitCodec()


def ns_run(target: Target, delta: float, samples: int, seed: int, run: int) -> float:
    """Fraction of ``samples`` random inputs whose label changes under noise."""
    f, codec = _labeler(target)
    gen = np.random.Philox(key=np.array([seed & (2**64 - 1), stream_id(target, delta, run)], dtype=np.uint64))
    nb = codec.n_bits
    x_words = gen.random_raw(samples)
    x = ((x_words[:, None] >> np.arange(nb, dtype=np.uint64)) & np.uint64(1)).astype(np.uint8)
    if delta == 0.0:
        return 0.0
    y = flip_with_draws(x, delta, _u32(gen, samples * nb))
    return float(np.mean(f(codec.decode(x)) != f(codec.decode(y))))


def ns_estimate(target: Target, delta: float, cfg: NsConfig) -> tuple[float, float]:
    """Mean and standard error over ``cfg.runs`` independent Monte-Carlo runs."""
    vals = np.array([ns_run(target, delta, cfg.samples, cfg.seed, r) for r in range(cfg.runs)])
    stderr = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), stderr


def avg_ns(target: Target, cfg: NsConfig) -> float:
    return float(np.mean([ns_estimate(target, d, cfg)[0] for d in cfg.grid]))


@dataclass(frozen=True)
class NsRow:
    aggregation: AggregationKind
    m: int
    delta: float
    mean: float
    stderr: float


def _row(args: tuple[TaskSpec, float, NsConfig]) -> NsRow:
    spec, delta, cfg = args
    mean, se = ns_estimate(spec, delta, cfg)
    return NsRow(spec.aggregation, spec.m, delta, mean, se)


def ns_table(specs: Iterable[TaskSpec], cfg: NsConfig, workers: int = 1) -> list[NsRow]:
    jobs = [(s, d, cfg) for s in specs for d in cfg.grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row, jobs, chunksize=8))
    else:
        rows = [_row(j) for j in jobs]
    return sorted(rows, key=lambda r: (int(r.aggregation), r.m, r.delta))


def averages(rows: Iterable[NsRow]) -> dict[tuple[AggregationKind, int], float]:
    acc: dict[tuple[AggregationKind, int], list[float]] = {}
    for r in rows:
        acc.setdefault((r.aggregation, r.m), []).append(r.mean)
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


def write_ns_csv(rows: list[NsRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["aggregation", "m", "delta", "ns_mean", "ns_stderr"])
        for r in rows:
            w.writerow([r.aggregation.slug, r.m, repr(r.delta), repr(r.mean), repr(r.stderr)])


def summary_text(rows: list[NsRow]) -> str:
    lines = ["aggregation  m  avg_ns"]
    for (agg, m), v in averages(rows).items():
        lines.append(f"{agg.slug:<11} {m:>2}  {v:.6f}")
    return "\n".join(lines) + "\n"


def ns_sweep(specs: Iterable[TaskSpec], cfg: NsConfig, out: str | os.PathLike, workers: int = 1) -> list[NsRow]:
    """Write the sweep table as CSV and an average-per-spec summary next to it."""
    rows = ns_table(specs, cfg, workers)
    write_ns_csv(rows, out)
    root, _ = os.path.splitext(os.fspath(out))
    with open(root + ".summary.txt", "w") as fh:
        fh.write(summary_text(rows))
    return rows
