"""Metric curves over time from metrics.csv."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .runfiles import load_metrics

PANELS = [
    ("mt_pos_rmse", "MT position RMSE [m]"),
    ("bias_diff_rmse", "bias-difference RMSE [m]"),
    ("ospa", "OSPA(c=2, p=1) [m]"),
    ("separation_accuracy", "source separation accuracy"),
]


def plot_metrics(run_dir, out_image) -> "matplotlib.figure.Figure":
    """Render the four headline metric curves; single-step runs fall back to
    markers since a one-point line is invisible."""
    rows = load_metrics(Path(run_dir))
    steps = [r["step"] for r in rows]
    scatter_only = len(rows) == 1
    fig, axes = plt.subplots(2, 2, figsize=(9.0, 6.5), sharex=True)
    for ax, (key, label) in zip(axes.flat, PANELS):
        values = [r[key] for r in rows]
        if scatter_only:
            ax.plot(steps, values, marker="o", ls="none", color="tab:blue")
        else:
            ax.plot(steps, values, lw=1.4, color="tab:blue")
        ax.set_ylabel(label, fontsize=9)
        ax.grid(True, alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("step")
    fig.suptitle(Path(run_dir).name)
    fig.tight_layout()
    fig.savefig(out_image, dpi=140)
    plt.close(fig)
    return fig
