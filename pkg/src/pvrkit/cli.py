"""Command-line entry point: ``pvr <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 validation or audit failure,
3 numeric/training failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pvrkit import dshift, noise, oracle, taskgen, trainer, visualgen
from pvrkit.core import AggregationKind, TaskSpec
from pvrkit.errors import NumericFailure, PVRError, UsageError

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("pvrkit")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _agg(text: str) -> AggregationKind:
    try:
        return AggregationKind.parse(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_range(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return out


def _write_manifest(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_gen(args) -> int:
    spec = TaskSpec(m=args.m, aggregation=args.agg)
    ds = taskgen.generate(spec, args.n, args.seed, workers=args.workers)
    taskgen.write_pvr(ds, args.out)
    if args.csv:
        taskgen.export_csv(ds, args.csv)
    print(f"wrote {ds.count} examples to {args.out}")
    return EXIT_OK


def cmd_holdout(args) -> int:
    spec = TaskSpec(m=args.m, aggregation=args.agg)
    i = len(dshift.perm_list(args.m)) if args.all_perms else args.i
    hs = dshift.holdout_set(args.m, i)
    test_seed = args.seed + 1
    train = dshift.gen_train_holdout(spec, hs, args.n, args.seed, workers=args.workers)
    test = dshift.gen_adversarial_test(spec, args.n_test or args.n, test_seed, workers=args.workers)
    taskgen.write_pvr(train, args.out_train)
    taskgen.write_pvr(test, args.out_test)
    manifest = {
        **hs.to_json(),
        "aggregation": spec.aggregation.slug,
        "train": {"path": str(args.out_train), "count": train.count, "seed": args.seed},
        "test": {"path": str(args.out_test), "count": test.count, "seed": test_seed},
    }
    path = Path(args.manifest) if args.manifest else Path(str(args.out_train) + ".manifest.json")
    _write_manifest(path, manifest)
    print(f"{hs.tag}: heldout {[list(t) for t in hs.order]}; manifest {path}")
    return EXIT_OK


def cmd_ns(args) -> int:
    if args.samples < 1 or args.runs < 1 or args.grid < 1:
        raise UsageError("--samples, --runs and --grid must be positive")
    cfg = noise.NsConfig(samples=args.samples, runs=args.runs, grid=noise.default_grid(args.grid), seed=args.seed)
    specs = [TaskSpec(m=m, aggregation=a) for a in args.aggs for m in args.m_range]
    rows = noise.ns_sweep(specs, cfg, args.out, workers=args.workers)
    sys.stdout.write(noise.summary_text(rows))
    if args.plot:
        from pvrkit import report

        report.plot_ns(rows, Path(args.out).with_suffix(".png"))
    return EXIT_OK


def cmd_audit(args) -> int:
    ds = taskgen.read_pvr(args.data, verify=False)
    hs = None
    if args.holdout_manifest:
        hs = dshift.HoldoutSpec.from_json(json.loads(Path(args.holdout_manifest).read_text()))
    rep = oracle.check_dataset(ds, hs)
    print(rep.to_json())
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def cmd_oracle(args) -> int:
    spec = TaskSpec(m=args.m, aggregation=args.agg)
    counts = oracle.label_distribution(spec)
    total = sum(counts)
    for label, c in enumerate(counts):
        print(f"{label}\t{c}\t{c / total:.6f}")
    return EXIT_OK


def _load_experiment(path: Path):
    doc = json.loads(path.read_text())
    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    model = trainer.ModelConfig.from_json(doc.get("model", {}))
    tcfg = trainer.TrainConfig.from_json(doc.get("train", {}))
    if "train_data" not in doc:
        raise UsageError("experiment config needs a train_data path")
    train_ds = taskgen.read_pvr(resolve(doc["train_data"]))
    evals = {name: taskgen.read_pvr(resolve(p)) for name, p in doc.get("evals", {}).items()}
    out = resolve(doc.get("out", path.stem + "_run"))
    return model, tcfg, train_ds, evals, out


def cmd_train(args) -> int:
    model, tcfg, train_ds, evals, out = _load_experiment(Path(args.config))
    if args.out:
        out = Path(args.out)
    rep = trainer.train(model, tcfg, train_ds, evals, log=lambda row: log.debug("%s", row))
    rep.write(out)
    (out / "timing.json").write_text(json.dumps({"wall_time_s": rep.wall_time}) + "\n")
    if args.plot:
        from pvrkit import report

        report.plot_curves(rep, out / "curves.png")
    summary = {k: v for k, v in rep.final.items() if not k.endswith("logits_by_label")}
    print(json.dumps({"status": rep.status, "iterations": rep.iterations, **summary, "ignored": rep.ignored, "discarded": rep.discarded}))
    return EXIT_OK if rep.status == "ok" else EXIT_NUMERIC


def _plan(text: str) -> dict:
    phases = {p.value: p for p in dshift.Phase}
    if text == "iid":
        return dshift.iid_plan()
    if text in phases:
        return dshift.visual_split_plan(dshift.PositionalHoldoutRule.default(), phases[text])
    path = Path(text)
    if not path.exists():
        raise UsageError(f"plan must be iid, {', '.join(phases)} or a JSON file; got {text!r}")
    return json.loads(path.read_text())


def cmd_visual(args) -> int:
    bank = visualgen.read_idx(args.images, args.labels)
    if args.style == "block":
        ds = visualgen.compose_block(bank, _plan(args.plan), args.n, args.seed, workers=args.workers, plan_name=args.plan)
    else:
        ds = visualgen.compose_sequential(bank, args.n, args.seed, workers=args.workers)
    visualgen.write_composed(ds, args.out)
    print(f"wrote {len(ds)} {args.style} examples of shape {ds.images.shape[1:]} to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    workers = taskgen.default_workers()
    p = _Parser(prog="pvr", description="Pointer value retrieval datasets, audits, noise sensitivity and training.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate an iid vectorized dataset")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--agg", type=_agg, default=AggregationKind.MOD_SUM)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--csv")
    g.add_argument("--workers", type=int, default=workers)
    g.set_defaults(fn=cmd_gen)

    h = sub.add_parser("holdout", help="emit a permutation-holdout train set and adversarial test set")
    h.add_argument("--m", type=int, required=True)
    h.add_argument("--agg", type=_agg, default=AggregationKind.MOD_SUM)
    which = h.add_mutually_exclusive_group(required=True)
    which.add_argument("--i", type=int)
    which.add_argument("--all-perms", action="store_true")
    h.add_argument("--n", type=int, required=True)
    h.add_argument("--n-test", type=int)
    h.add_argument("--seed", type=int, required=True)
    h.add_argument("--out-train", required=True)
    h.add_argument("--out-test", required=True)
    h.add_argument("--manifest")
    h.add_argument("--workers", type=int, default=workers)
    h.set_defaults(fn=cmd_holdout)

    n = sub.add_parser("ns", help="Monte-Carlo noise-sensitivity sweep")
    n.add_argument("--aggs", type=lambda s: [_agg(x) for x in s.split(",") if x], default=list(AggregationKind))
    n.add_argument("--m-range", type=_int_range, default=list(range(5)))
    n.add_argument("--samples", type=int, default=10_000)
    n.add_argument("--runs", type=int, default=10)
    n.add_argument("--grid", type=int, default=50, help="number of log-uniform points on [e^-7, e^-1]")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True)
    n.add_argument("--plot", action="store_true", help="also render <out>.png")
    n.add_argument("--workers", type=int, default=workers)
    n.set_defaults(fn=cmd_ns)

    a = sub.add_parser("audit", help="relabel every record and check holdout windows")
    a.add_argument("--data", required=True)
    a.add_argument("--holdout-manifest")
    a.set_defaults(fn=cmd_audit)

    o = sub.add_parser("oracle", help="exhaustive label histogram")
    o.add_argument("--m", type=int, required=True)
    o.add_argument("--agg", type=_agg, default=AggregationKind.MOD_SUM)
    o.set_defaults(fn=cmd_oracle)

    t = sub.add_parser("train", help="train the reference MLP from an experiment config")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.add_argument("--plot", action="store_true", help="also render curves.png")
    t.set_defaults(fn=cmd_train)

    v = sub.add_parser("visual", help="compose visual PVR images from IDX digit banks")
    v.add_argument("--style", choices=["block", "sequential"], required=True)
    v.add_argument("--images", required=True)
    v.add_argument("--labels", required=True)
    v.add_argument("--plan", default="iid", help="iid, train, dshift_test, holdout_test, or a JSON file")
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--workers", type=int, default=workers)
    v.set_defaults(fn=cmd_visual)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PVRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
