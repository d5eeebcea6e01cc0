import itertools
import math

import numpy as np
import pytest

from pvrkit import noise, rng
from pvrkit.core import AggregationKind, TaskSpec
from pvrkit.errors import UsageError
from pvrkit.oracle import reference_label


def exact_label_marginal(spec: TaskSpec) -> np.ndarray:
    """Label distribution under uniform random bits, by enumerating raw 4-bit values."""
    counts = np.zeros(10)
    for ptr_raw in range(16):
        p = ptr_raw % 10
        for raws in itertools.product(range(16), repeat=spec.m + 1):
            seq = [p] + [0] * 10
            for j, r in enumerate(raws):
                seq[1 + (p + j) % 10] = r % 10
            counts[reference_label(seq, spec)] += 1
    return counts / counts.sum()


def test_codec_dimensions():
    c = noise.BitCodec()
    assert (c.D, c.n_bits) == (4, 44)
    assert noise.BitCodec(K=8).D == 3 and noise.BitCodec(K=2).D == 1


@pytest.mark.parametrize("bits,digit", [([0, 1, 1, 1], 7), ([1, 1, 0, 1], 3), ([1, 1, 1, 1], 5), ([1, 0, 1, 0], 0)])
def test_decode_groups(bits, digit):
    decoded = noise.BitCodec().decode(np.array(bits * 11))
    assert decoded.tolist() == [digit] * 11


def test_encode_decode_round_trip():
    c = noise.BitCodec()
    digits = np.random.default_rng(1).integers(0, 10, size=(100, 11))
    assert np.array_equal(c.decode(c.encode(digits)), digits)
    assert c.decode(np.ones(44, dtype=np.uint8)).max() < 10


def test_decode_length_mismatch():
    with pytest.raises(UsageError):
        noise.BitCodec().decode(np.zeros(43))


def test_flip_extremes():
    bits = np.random.default_rng(2).integers(0, 2, size=44).astype(np.uint8)
    assert np.array_equal(noise.flip(bits, 0.0, rng.RngStream(1)), bits)
    assert np.array_equal(noise.flip(bits, 1.0, rng.RngStream(1)), 1 - bits)


def test_flip_half_rate():
    bits = np.zeros(100_000, dtype=np.uint8)
    flipped = int(noise.flip(bits, 0.5, rng.RngStream(3)).sum())
    assert abs(flipped - 50_000) < 4 * math.sqrt(100_000 * 0.25)


def test_ns_zero_delta_is_exactly_zero():
    assert noise.ns_estimate(TaskSpec(m=3), 0.0, noise.NsConfig(samples=500, runs=3)) == (0.0, 0.0)


def test_constant_function_has_zero_sensitivity():
    def const(d):
        return np.zeros(len(d), dtype=np.int64)

    cfg = noise.NsConfig(samples=1000, runs=2, grid=noise.default_grid(5))
    assert noise.ns_estimate(const, 0.3, cfg)[0] == 0.0
    assert noise.avg_ns(const, cfg) == 0.0


def test_analytic_anchor_marginal():
    q = exact_label_marginal(TaskSpec(m=0))
    assert np.allclose(q, [2 / 16] * 6 + [1 / 16] * 4)
    assert 1 - (q**2).sum() == pytest.approx(0.890625, abs=1e-15)


@pytest.mark.parametrize(
    "spec",
    [TaskSpec(m=0), TaskSpec(m=1, aggregation="min"), TaskSpec(m=2, aggregation="maj_vote"), TaskSpec(m=1, aggregation="max")],
)
def test_half_noise_matches_collision_probability(spec):
    p = exact_label_marginal(spec)
    expected = 1 - (p**2).sum()
    mean, se = noise.ns_estimate(spec, 0.5, noise.NsConfig())
    assert abs(mean - expected) < 4 * se


def test_mod_sum_sensitivity_grows_with_window():
    cfg = noise.NsConfig()
    lo_mean, lo_se = noise.ns_estimate(TaskSpec(m=0), math.exp(-3), cfg)
    hi_mean, hi_se = noise.ns_estimate(TaskSpec(m=3), math.exp(-3), cfg)
    assert lo_mean + 4 * lo_se < hi_mean - 4 * hi_se


def test_estimates_do_not_depend_on_evaluation_order():
    cfg = noise.NsConfig(samples=2000, runs=2, grid=noise.default_grid(4))
    spec = TaskSpec(m=2)
    first = [noise.ns_estimate(spec, d, cfg) for d in cfg.grid]
    second = [noise.ns_estimate(spec, d, cfg) for d in reversed(cfg.grid)][::-1]
    assert first == second


def test_default_config_and_grid():
    cfg = noise.NsConfig()
    assert (cfg.samples, cfg.runs, len(cfg.grid)) == (10_000, 10, 50)
    assert cfg.grid[0] == pytest.approx(math.exp(-7)) and cfg.grid[-1] == pytest.approx(math.exp(-1))
    ratios = np.diff(np.log(cfg.grid))
    assert np.allclose(ratios, ratios[0])


def test_config_validation():
    with pytest.raises(UsageError):
        noise.NsConfig(samples=0)
    with pytest.raises(UsageError):
        noise.NsConfig(grid=(0.0, 0.5))


def test_sweep_rows_sorted_and_deterministic(tmp_path):
    cfg = noise.NsConfig(samples=100, runs=2, seed=5)
    specs = [TaskSpec(m=m, aggregation=a) for a in reversed(list(AggregationKind)) for m in range(5)]
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    rows = noise.ns_sweep(specs, cfg, out_a)
    noise.ns_sweep(specs, cfg, out_b, workers=2)
    assert len(rows) == 1250
    keys = [(int(r.aggregation), r.m, r.delta) for r in rows]
    assert keys == sorted(keys)
    assert out_a.read_bytes() == out_b.read_bytes()
    lines = out_a.read_text().splitlines()
    assert lines[0] == "aggregation,m,delta,ns_mean,ns_stderr" and len(lines) == 1251
    assert (tmp_path / "a.summary.txt").read_text().count("\n") == 26
