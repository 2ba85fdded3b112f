"""Render benchmark sweep figures next to the CSV output."""

from __future__ import annotations

import os
from typing import Iterable

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import BenchRow


def render_figures(rows: Iterable[BenchRow], csv_path: str) -> list[str]:
    """Write throughput and ratio plots alongside ``csv_path``.

    Returns the paths of the written image files.
    """
    rows = list(rows)
    stem, _ = os.path.splitext(csv_path)
    d = [r.distance for r in rows]
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(d, [r.queries_per_sec for r in rows], marker=".", lw=1)
    ax.set_xlabel("query distance (cell units)")
    ax.set_ylabel("queries / s")
    ax.set_title("Throughput vs query distance")
    ax.grid(True, which="both", alpha=0.3)
    path = f"{stem}_throughput.png"
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(d, [r.ratio_vs_box for r in rows], marker=".", lw=1)
    ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("query distance (cell units)")
    ax.set_ylabel("throughput ratio vs box baseline")
    ax.set_title("Speed relative to the bounding-box scan")
    ax.grid(True, alpha=0.3)
    path = f"{stem}_ratio.png"
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    return written
