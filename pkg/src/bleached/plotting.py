"""Report figures, rendered headless next to the CSV files they summarise."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import METRIC_TITLES, METRICS, ScoreReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "savefig.dpi": 150,
}

# matplotlib stamps its version into PNG metadata; drop it so reruns are byte-identical
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_PNG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_per_type(reports: Mapping[str, ScoreReport], path, title: str = "") -> Path:
    """Grouped bars: one group per event type, one bar per metric (F1 in percent)."""
    names = list(reports)
    x = np.arange(len(names))
    width = 0.8 / len(METRICS)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(names) + 1.5), 3.2))
        for k, metric in enumerate(METRICS):
            vals = [100 * reports[n][metric].f1 for n in names]
            ax.bar(x + (k - (len(METRICS) - 1) / 2) * width, vals, width, label=METRIC_TITLES[metric])
        ax.grid(axis="x", visible=False)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("F1 (%)")
        ax.set_ylim(0, 100)
        if title:
            ax.set_title(title)
        ax.legend(ncol=2, fontsize=7)
        return _save(fig, path)


def plot_learning_curve(curve: Mapping[int, ScoreReport], path, title: str = "") -> Path:
    """F1 against the number of training documents, one line per metric."""
    sizes = sorted(curve)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for metric in METRICS:
            ax.plot(sizes, [100 * curve[k][metric].f1 for k in sizes], marker="o", label=METRIC_TITLES[metric])
        ax.set_xlabel("training documents")
        ax.set_ylabel("F1 (%)")
        ax.set_ylim(0, 100)
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7)
        return _save(fig, path)
