"""Benchmark figures rendered next to the CSV report."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .bench import BenchReport

__all__ = ["render_bench_figures"]


def render_bench_figures(report: BenchReport, csv_path) -> list[str]:
    """Write the accumulated-pricing-time curve and the speedup scatter as
    PNGs alongside the report CSV; returns the created paths."""
    base, _ = os.path.splitext(str(csv_path))
    paths = []

    order = np.argsort([r.dp_ms for r in report.rows])
    dp = np.cumsum([report.rows[i].dp_ms for i in order])
    nbd = np.cumsum([report.rows[i].nbd_ms for i in order])
    fig, ax = plt.subplots(figsize=(6, 4))
    idx = np.arange(1, len(order) + 1)
    ax.plot(idx, dp, "o-", label="dynamic program")
    ax.plot(idx, nbd, "s-", label="nested Benders")
    ax.set_xlabel("instances (sorted by DP pricing time)")
    ax.set_ylabel("accumulated pricing time [ms]")
    ax.set_title("Accumulated pricing time")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    path = f"{base}_accumulated_time.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for tier in sorted({r.tier for r in report.rows}):
        xs = [r.dp_ms for r in report.rows if r.tier == tier]
        ys = [r.speedup for r in report.rows if r.tier == tier]
        ax.scatter(xs, ys, label=tier, alpha=0.8)
    ax.axhline(1.0, color="grey", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("DP pricing time per instance [ms]")
    ax.set_ylabel("speedup (DP time / NBD time)")
    ax.set_title("Speedup vs DP pricing effort")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    path = f"{base}_speedup.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)
    return paths
