"""Figure rendering for batch reports.

Figures are written next to the delimited output so a run directory is
self-contained: a summary bar chart per table and a compactness histogram
per cell.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_summary_figure(cells: list[dict], path: Path):
    labels = [f"{c['source']}\n{c['mode']}" for c in cells]
    values = [c["C"] for c in cells]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(cells)), 3.2))
    ax.bar(np.arange(len(cells)), values, color="#4878cf")
    ax.set_xticks(np.arange(len(cells)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("mean compactness")
    ax.set_ylim(0, 1)
    for x, v in enumerate(values):
        ax.text(x, v + 0.02, f"{v:.3f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_compactness_histogram(records, path: Path, title: str = ""):
    values = [r.metrics["C"] for r in records]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.hist(values, bins=20, range=(0, 1), color="#6acc65", edgecolor="black",
            linewidth=0.4)
    ax.set_xlabel("episode compactness")
    ax.set_ylabel("episodes")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_container_figure(session, path: Path):
    """Top-view height map per container of a finished session."""
    n = len(session.containers)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    for i, c in enumerate(session.containers):
        ax = axes[0][i]
        im = ax.imshow(c.hm.grid.T, origin="lower", cmap="viridis",
                       vmin=0, vmax=c.spec.height)
        ax.set_title(f"container {i} (C={c.compactness:.2f})", fontsize=8)
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
