"""Counter-based random streams (Philox4x64-10).

A stream is the Philox keystream under key ``(seed, stream_index)``. Block ``j``
of a stream is the Philox4x64-10 output for counter ``(j + 1, 0, 0, 0)``; this
matches ``numpy.random.Philox(key=[seed, stream]).random_raw()``, which the
scalar :class:`RngStream` uses directly. Each 64-bit word yields two 32-bit
draws, low half first.

:func:`philox_blocks` is a vectorized reimplementation used for bulk
generation. Tests pin it against numpy's Philox and the Random123 known-answer
vector.
"""

from __future__ import annotations

import numpy as np

from pvrkit.errors import UsageError

ALGORITHM = "philox4x64-10"
ALGORITHM_ID = 1

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_U64 = (1 << 64) - 1


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a0, a1 = a & _LO32, a >> _S32
    b0, b1 = b & _LO32, b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _LO32) + (p10 & _LO32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, a * b


def philox_blocks(key0, key1, ctr0, ctr1=0, ctr2=0, ctr3=0, rounds: int = 10) -> np.ndarray:
    """Philox4x64 over broadcast uint64 arrays; returns shape (..., 4)."""
    arrs = np.broadcast_arrays(*(np.asarray(x, dtype=np.uint64) for x in (key0, key1, ctr0, ctr1, ctr2, ctr3)))
    k0, k1, c0, c1, c2, c3 = (a.copy() for a in arrs)
    with np.errstate(over="ignore"):
        for r in range(rounds):
            if r:
                k0 += _W0
                k1 += _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1)


def stream_words(seed: int, streams, n_blocks: int, first_block: int = 0) -> np.ndarray:
    """64-bit words of many streams: shape (len(streams), 4 * n_blocks)."""
    streams = np.asarray(streams, dtype=np.uint64).reshape(-1)
    ctr = np.arange(first_block + 1, first_block + 1 + n_blocks, dtype=np.uint64)
    out = philox_blocks(np.uint64(seed & _U64), streams[:, None], ctr[None, :])
    return out.reshape(len(streams), 4 * n_blocks)


def stream_draws(seed: int, streams, n_draws: int) -> np.ndarray:
    """First ``n_draws`` 32-bit draws of each stream, shape (len(streams), n_draws), uint64."""
    n_blocks = -(-n_draws // 8)
    words = stream_words(seed, streams, n_blocks)
    halves = np.empty((words.shape[0], words.shape[1] * 2), dtype=np.uint64)
    halves[:, 0::2] = words & _LO32
    halves[:, 1::2] = words >> _S32
    return halves[:, :n_draws]


def rejection_limit(n: int) -> int:
    if n < 1 or n > 1 << 32:
        raise UsageError(f"bound {n} outside [1, 2^32]")
    return ((1 << 32) // n) * n


class RngStream:
    """One reproducible stream of 32-bit draws."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _U64
        self.stream = int(stream) & _U64
        self._gen = np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        self._pending: int | None = None
        self.draws = 0

    def skip(self, n: int) -> None:
        for _ in range(n):
            self.next_u32()

    def next_u32(self) -> int:
        self.draws += 1
        if self._pending is not None:
            v, self._pending = self._pending, None
            return v
        w = int(self._gen.random_raw())
        self._pending = w >> 32
        return w & 0xFFFFFFFF

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection on 32-bit draws."""
        limit = rejection_limit(n)
        while True:
            x = self.next_u32()
            if x < limit:
                return x % n

    def next_digit(self, K: int = 10) -> int:
        if K < 2:
            raise UsageError(f"vocabulary size must be at least 2, got {K}")
        return self.next_below(K)

    def next_unit(self) -> float:
        """Uniform float in [0, 1) from 53 bits of two draws."""
        lo = self.next_u32()
        hi = self.next_u32()
        return (((hi << 32) | lo) >> 11) * 2.0**-53


class DrawWalker:
    """Vectorized sequential consumption of many streams at once.

    Row ``r`` walks stream ``streams[r]`` exactly as :meth:`RngStream.next_below`
    would. The first ``width`` draws of every stream are precomputed; rows that
    run past them continue on a scalar :class:`RngStream`.
    """

    def __init__(self, seed: int, streams, width: int):
        self.seed = seed
        self.streams = np.asarray(streams, dtype=np.uint64).reshape(-1)
        self.n = len(self.streams)
        self.width = width
        self.draws = stream_draws(seed, self.streams, width) if self.n else np.zeros((0, width), np.uint64)
        self.ptr = np.zeros(self.n, dtype=np.int64)
        self._scalar: dict[int, RngStream] = {}

    def _scalar_below(self, row: int, b: int) -> int:
        s = self._scalar.get(row)
        if s is None:
            s = RngStream(self.seed, int(self.streams[row]))
            s.skip(int(self.ptr[row]))
            self._scalar[row] = s
        return s.next_below(b)

    def take(self, bounds) -> np.ndarray:
        """One bounded draw per row; ``bounds`` is an int or a per-row array."""
        b = np.broadcast_to(np.asarray(bounds, dtype=np.int64), (self.n,))
        if self.n and (b.min() < 1 or b.max() > 1 << 32):
            raise UsageError("bounds must lie in [1, 2^32]")
        b64 = b.astype(np.uint64)
        limit = (np.uint64(1 << 32) // b64) * b64
        out = np.empty(self.n, dtype=np.int64)
        pending = np.ones(self.n, dtype=bool)
        for r in self._scalar:
            out[r] = self._scalar_below(r, int(b[r]))
            pending[r] = False
        while pending.any():
            idx = np.flatnonzero(pending)
            over = self.ptr[idx] >= self.width
            for r in idx[over]:
                out[r] = self._scalar_below(int(r), int(b[r]))
            pending[idx[over]] = False
            idx = idx[~over]
            x = self.draws[idx, self.ptr[idx]]
            self.ptr[idx] += 1
            ok = x < limit[idx]
            out[idx[ok]] = (x[ok] % b64[idx[ok]]).astype(np.int64)
            pending[idx[ok]] = False
        return out


def bounded_columns(seed: int, streams, bounds: list[int], spare: int = 8) -> np.ndarray:
    """Draw ``len(bounds)`` bounded integers per stream; column ``j`` is uniform on ``[0, bounds[j])``."""
    walker = DrawWalker(seed, streams, len(bounds) + spare)
    cols = [walker.take(b) for b in bounds]
    return np.stack(cols, axis=1) if cols else np.zeros((walker.n, 0), dtype=np.int64)
