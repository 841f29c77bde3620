"""Map panel: environment, true map and estimated map with per-BS color
coding, plus MT trajectories up to a chosen step."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .runfiles import RunDirError, load_estimates, load_ground_truth, load_manifest, steps_in

BS_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def bs_color(j: int) -> str:
    return BS_COLORS[(j - 1) % len(BS_COLORS)]


def plot_map(run_dir, step: int, out_image) -> "matplotlib.figure.Figure":
    """Render one map panel at `step` and write it to out_image.

    True VAs are squares, confirmed PVA estimates are plus markers with a
    center dot, both colored by (true / estimated) source BS. Trajectories
    show the true path as a line and the estimated path as dots, up to and
    including `step`.
    """
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    truth = load_ground_truth(run_dir)
    estimates = load_estimates(run_dir)
    steps = steps_in(estimates)
    if step not in steps:
        raise RunDirError(f"step {step} not in run (have {steps[0]}..{steps[-1]})")

    cfg = manifest["config"]
    fig, ax = plt.subplots(figsize=(7.0, 6.0))

    for wall in cfg["walls"]:
        (a, b) = wall
        ax.plot([a[0], b[0]], [a[1], b[1]], color="0.25", lw=2.5, zorder=1)

    bs_ids = sorted({idx + 1 for idx in range(len(cfg["base_stations"]))})
    for idx, bs in enumerate(cfg["base_stations"], start=1):
        ax.plot(*bs["position"], marker="^", ms=11, color=bs_color(idx),
                mec="black", ls="none", zorder=5)
        ax.annotate(f"BS{idx}", bs["position"], textcoords="offset points",
                    xytext=(6, 6), fontsize=9)

    for j in bs_ids:
        vas = [v for v in truth["vas"] if v["bs"] == j]
        if vas:
            xy = np.array([v["position"] for v in vas])
            ax.plot(xy[:, 0], xy[:, 1], marker="s", ls="none", ms=9,
                    mfc="none", mec=bs_color(j), mew=1.6,
                    label=f"BS{j} true VA", zorder=4)

    pvas = [r for r in estimates if r["entity"] == "pva" and r["step"] == step]
    for j in bs_ids:
        mine = [r for r in pvas if r["bs"] == j]
        label = f"BS{j} estimated"
        if mine:
            xy = np.array([r["position"] for r in mine])
            ax.plot(xy[:, 0], xy[:, 1], marker="+", ls="none", ms=11,
                    mew=1.8, color=bs_color(j), label=label, zorder=6)
            ax.plot(xy[:, 0], xy[:, 1], marker=".", ls="none", ms=4,
                    color=bs_color(j), zorder=6)
        else:
            ax.plot([], [], marker="+", ls="none", ms=11, mew=1.8,
                    color=bs_color(j), label=label)

    mt_states = np.asarray(truth["mt_states"])  # (n_steps, I, 6)
    n_mt = mt_states.shape[1]
    for i in range(n_mt):
        true_xy = mt_states[: step + 1, i, :2]
        ax.plot(true_xy[:, 0], true_xy[:, 1], color="0.45", lw=1.0, zorder=2,
                label="true MT path" if i == 0 else None)
        est_xy = np.array([
            r["position"] for r in estimates
            if r["entity"] == "mt" and r["index"] == i and r["step"] <= step
        ])
        ax.plot(est_xy[:, 0], est_xy[:, 1], ls="none", marker=".", ms=3.5,
                color="black", zorder=3, label="estimated MT path" if i == 0 else None)
        ax.annotate(f"MT{i + 1}", est_xy[-1], textcoords="offset points",
                    xytext=(5, -9), fontsize=9)

    ax.set_title(f"map at step {step} ({len(pvas)} confirmed features)")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="upper left", fontsize=8, framealpha=0.9)
    fig.tight_layout()
    fig.savefig(out_image, dpi=140)
    plt.close(fig)
    return fig
