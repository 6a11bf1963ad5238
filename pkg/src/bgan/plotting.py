"""Figures rendered next to the CSV reports (headless backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_LABELS = {"ae1": "reconstruction (1)", "ae2": "reconstruction (2)",
           "bt1": "back-translation (1)", "bt2": "back-translation (2)",
           "d_loss": "discriminator", "g_loss": "generator"}


def plot_loss_trace(rows: Sequence[Mapping], path: str | Path) -> Path:
    """Two panels: translation-unit losses, then the adversarial pair."""
    path = Path(path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.8))
    its = [r["iter"] for r in rows]
    for key in ("ae1", "ae2", "bt1", "bt2"):
        ax1.plot(its, [r[key] for r in rows], label=_LABELS[key], lw=1)
    for key in ("d_loss", "g_loss"):
        ax2.plot(its, [r[key] for r in rows], label=_LABELS[key], lw=1)
    ax1.set_yscale("log")
    ax1.set_ylabel("cross-entropy")
    ax2.set_ylabel("hinge loss")
    for ax in (ax1, ax2):
        ax.set_xlabel("iteration")
        ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_report(rows: Sequence[Mapping], path: str | Path) -> Path:
    """Bar chart of a metric report (one bar per metric/language pair)."""
    path = Path(path)
    labels = [f"{r['metric']}\n(lang {r['language']})" for r in rows]
    values = [float(r["value"]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows)), 3.5))
    bars = ax.bar(range(len(values)), values, width=0.6, color="#4c72b0")
    ax.set_xticks(range(len(values)), labels, fontsize=8)
    for bar, v in zip(bars, values):
        ax.annotate(f"{v:.2f}", (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
