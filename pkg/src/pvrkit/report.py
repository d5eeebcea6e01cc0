"""Figures rendered next to the CSV/JSON outputs of ``ns`` and ``train``."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from pvrkit.noise import NsRow, averages  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path: str | os.PathLike) -> None:
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def plot_ns(rows: list[NsRow], path: str | os.PathLike) -> None:
    """Left: NS against delta per complexity for each aggregation. Right: averages."""
    series: dict = defaultdict(list)
    for r in rows:
        series[(r.aggregation, r.m)].append(r)
    aggs = sorted({a for a, _ in series}, key=int)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
        ax = axes[0]
        for agg in aggs:
            for (a, m), pts in sorted(series.items(), key=lambda kv: kv[0][1]):
                if a != agg:
                    continue
                pts = sorted(pts, key=lambda r: r.delta)
                ax.errorbar(
                    [p.delta for p in pts],
                    [p.mean for p in pts],
                    yerr=[p.stderr for p in pts],
                    label=f"{agg.slug} m={m}",
                    lw=1,
                    capsize=0,
                    ls="-" if agg.slug == "mod_sum" else ":",
                )
        ax.set_xscale("log")
        ax.set_xlabel("flip probability")
        ax.set_ylabel("noise sensitivity")
        ax.legend(ncol=2, frameon=False)

        ax = axes[1]
        avg = averages(rows)
        ms = sorted({m for _, m in avg})
        width = 0.8 / max(len(aggs), 1)
        for j, agg in enumerate(aggs):
            ax.bar(
                [m + (j - (len(aggs) - 1) / 2) * width for m in ms],
                [avg.get((agg, m), float("nan")) for m in ms],
                width=width,
                label=agg.slug,
            )
        ax.set_xticks(ms)
        ax.set_xlabel("complexity m")
        ax.set_ylabel("average noise sensitivity")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_curves(report, path: str | os.PathLike) -> None:
    """Per-epoch accuracy curves of one training run."""
    epochs = [r["epoch"] for r in report.curves]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(epochs, [r["train_acc"] for r in report.curves], label="train", lw=1.2)
        for name in report.eval_names:
            key = f"{name}_acc"
            pts = [(r["epoch"], r[key]) for r in report.curves if r.get(key) is not None]
            if pts:
                ax.plot(*zip(*pts), label=name, lw=1.2)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("epoch")
        ax.set_ylabel("accuracy")
        title = f"n={report.train_size}"
        if report.ignored:
            title += " (ignored: train acc < 20%)"
        elif report.discarded:
            title += " (discarded: train acc < 60%)"
        ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)
