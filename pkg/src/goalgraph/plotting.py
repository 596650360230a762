"""Figures for score reports."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import LoadedReport, check_same_tasks  # noqa: E402

RC = {
    "font.size": 8,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "goalgraph",
}


def plot_scores(reports: Sequence[LoadedReport], path: str | Path) -> Path:
    """Grouped bar chart of per-task scores, one bar per model.

    The file format follows the suffix of ``path`` (png, pdf, svg).
    """
    check_same_tasks(reports)
    tasks = [r.task_id for r in reports[0].rows]
    x = np.arange(len(tasks))
    width = 0.8 / len(reports)
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(tasks) + 1.5), 3.2))
        for k, rep in enumerate(reports):
            scores = {r.task_id: r.score for r in rep.rows}
            ax.bar(x + (k - (len(reports) - 1) / 2) * width, [scores[t] for t in tasks],
                   width, label=f"{rep.model_id} ({rep.aggregate_percent:.2f}%)")
        ax.set_xticks(x)
        ax.set_xticklabels(tasks, rotation=60, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("max normalized LCS")
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        metadata = {"Software": None} if path.suffix.lower() == ".png" else None
        fig.savefig(path, dpi=150, metadata=metadata)
        plt.close(fig)
    return path
