import json

import numpy as np
import pytest

from pvrkit import taskgen, visualgen
from pvrkit.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.pvr", tmp_path / "b.pvr"
    assert run(capsys, "gen", "--m", 0, "--agg", "mod_sum", "--n", 64, "--seed", 7, "--out", a)[0] == 0
    assert run(capsys, "gen", "--m", 0, "--agg", "mod_sum", "--n", 64, "--seed", 7, "--out", b, "--workers", 8)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_csv(tmp_path, capsys):
    run(capsys, "gen", "--m", 2, "--n", 5, "--seed", 1, "--out", tmp_path / "a.pvr", "--csv", tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,y" and len(lines) == 6


def exit_code(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.mark.parametrize(
    "argv",
    [
        ["gen", "--m", 0, "--agg", "frobnicate", "--n", 4, "--seed", 1, "--out", "x"],
        ["gen", "--m", 10, "--n", 4, "--seed", 1, "--out", "x"],
        ["gen", "--m", 0, "--n", 0, "--seed", 1, "--out", "x"],
        ["gen", "--m", 0, "--n", 4, "--seed", 1, "--out", "x", "--bogus"],
        ["gen", "--m", 0],
        ["holdout", "--m", 1, "--i", 7, "--n", 10, "--seed", 1, "--out-train", "a", "--out-test", "b"],
        ["ns", "--samples", 0, "--out", "x.csv"],
        ["oracle", "--m", 6, "--agg", "mod_sum"],
    ],
)
def test_usage_errors_exit_1(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert exit_code(argv) == 1
    assert not (tmp_path / "x").exists()


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["holdout", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--m", "--agg", "--i", "--all-perms", "--n", "--seed", "--out-train", "--out-test", "--workers"):
        assert flag in text


def test_holdout_manifest_and_audit(tmp_path, capsys):
    tr, te = tmp_path / "tr.pvr", tmp_path / "te.pvr"
    code, _, _ = run(capsys, "holdout", "--m", 1, "--all-perms", "--n", 2000, "--seed", 3, "--out-train", tr, "--out-test", te)
    assert code == 0
    manifest_path = tmp_path / "tr.pvr.manifest.json"
    doc = json.loads(manifest_path.read_text())
    assert sorted(map(tuple, doc["heldout"])) == [(0, 1), (1, 0)]
    code, out, _ = run(capsys, "audit", "--data", tr, "--holdout-manifest", manifest_path)
    assert code == 0 and json.loads(out)["holdout_violations"] == []
    code, out, _ = run(capsys, "audit", "--data", te, "--holdout-manifest", manifest_path)
    assert code == 2 and len(json.loads(out)["holdout_violations"]) == 2000
    assert set(taskgen.read_pvr(te).labels.tolist()) == {1}


def test_audit_detects_corruption(tmp_path, capsys):
    path = tmp_path / "a.pvr"
    run(capsys, "gen", "--m", 2, "--n", 300, "--seed", 4, "--out", path)
    assert run(capsys, "audit", "--data", path)[0] == 0
    raw = bytearray(path.read_bytes())
    off = taskgen.HEADER.size + 12 * 41 + 11
    raw[off] = (raw[off] + 1) % 10
    path.write_bytes(bytes(raw))
    code, out, _ = run(capsys, "audit", "--data", path)
    assert code == 2 and json.loads(out)["mismatches"] == [41]


def test_bad_file_exit_2_and_missing_file_exit_4(tmp_path, capsys):
    bad = tmp_path / "bad.pvr"
    bad.write_bytes(b"NOPE" + bytes(60))
    assert run(capsys, "audit", "--data", bad)[0] == 2
    assert run(capsys, "audit", "--data", tmp_path / "missing.pvr")[0] == 4


def test_oracle_histogram(capsys):
    code, out, _ = run(capsys, "oracle", "--m", 1, "--agg", "mod_sum")
    assert code == 0
    rows = [line.split("\t") for line in out.splitlines()]
    assert [r[0] for r in rows] == [str(d) for d in range(10)]
    assert {r[1] for r in rows} == {"100"} and {r[2] for r in rows} == {"0.100000"}


def test_ns_defaults_and_determinism(tmp_path, capsys):
    from pvrkit.cli import build_parser

    args = build_parser().parse_args(["ns", "--out", "x.csv"])
    assert (args.samples, args.runs, args.grid) == (10_000, 10, 50)
    flags = ["--aggs", "mod_sum,min", "--m-range", "0-2", "--samples", 200, "--runs", 2, "--grid", 6, "--seed", 3]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "ns", *flags, "--out", a, "--workers", 1)[0] == 0
    assert run(capsys, "ns", *flags, "--out", b, "--workers", 8, "--plot")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 1 + 2 * 3 * 6
    assert (tmp_path / "b.png").read_bytes()[:4] == b"\x89PNG"


def test_train_from_config(tmp_path, capsys):
    run(capsys, "gen", "--m", 1, "--n", 64, "--seed", 1, "--out", tmp_path / "train.pvr")
    run(capsys, "gen", "--m", 1, "--n", 500, "--seed", 2, "--out", tmp_path / "test.pvr")
    cfg = {
        "model": {"embed": 4, "hidden": [16, 16, 16, 8]},
        "train": {"epochs": 2, "seed": 0},
        "train_data": "train.pvr",
        "evals": {"test": "test.pvr"},
        "out": "run",
    }
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "train", "--config", tmp_path / "exp.json", "--plot")
    assert code == 0
    summary = json.loads(out)
    assert summary["iterations"] >= 800 and "ignored" in summary
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["iterations"] == 800 and "ignored" in report and "discarded" in report
    assert "wall_time_s" in json.loads((tmp_path / "run" / "timing.json").read_text())
    assert (tmp_path / "run" / "curves.png").exists()
    first = (tmp_path / "run" / "report.json").read_bytes()
    run(capsys, "train", "--config", tmp_path / "exp.json")
    assert (tmp_path / "run" / "report.json").read_bytes() == first


def test_train_config_errors(tmp_path, capsys):
    (tmp_path / "exp.json").write_text(json.dumps({"train": {"lr": 1}}))
    assert run(capsys, "train", "--config", tmp_path / "exp.json")[0] == 1


def test_visual_block_and_sequential(tmp_path, capsys):
    rs = np.random.default_rng(0)
    labels = np.repeat(np.arange(10), 3).astype(np.uint8)
    visualgen.write_idx(tmp_path / "img", rs.integers(0, 256, size=(30, 28, 28), dtype=np.uint8))
    visualgen.write_idx(tmp_path / "lab", labels)
    common = ["--images", tmp_path / "img", "--labels", tmp_path / "lab", "--n", 20, "--seed", 5]
    assert run(capsys, "visual", "--style", "block", "--plan", "train", *common, "--out", tmp_path / "b1")[0] == 0
    assert run(capsys, "visual", "--style", "block", "--plan", "train", *common, "--out", tmp_path / "b8", "--workers", 8)[0] == 0
    for name in ("images-idx3-ubyte", "labels-idx1-ubyte", "manifest.json"):
        assert (tmp_path / "b1" / name).read_bytes() == (tmp_path / "b8" / name).read_bytes()
    assert visualgen.read_composed(tmp_path / "b1").images.shape == (20, 80, 80)
    assert run(capsys, "visual", "--style", "sequential", *common, "--out", tmp_path / "s")[0] == 0
    assert visualgen.read_composed(tmp_path / "s").images.shape == (20, 40, 440)
    assert run(capsys, "visual", "--style", "block", "--plan", "nope", *common, "--out", tmp_path / "x")[0] == 1
