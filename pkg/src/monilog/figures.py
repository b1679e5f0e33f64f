"""Figure rendering for the CLI report paths (written next to the data files)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import CalibrationResult


def save_calibration_heatmap(result: CalibrationResult, path: str | Path) -> Path:
    """Depth x similarity-threshold heatmap of the unsupervised score."""
    depths = sorted({p.tree_depth for p, _ in result.grid_scores})
    sims = sorted({p.sim_threshold for p, _ in result.grid_scores})
    grid = np.full((len(depths), len(sims)), np.nan)
    for params, score in result.grid_scores:
        grid[depths.index(params.tree_depth), sims.index(params.sim_threshold)] = score
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(sims), 1.2 + 0.7 * len(depths)))
    im = ax.imshow(grid, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(sims)), [f"{s:g}" for s in sims])
    ax.set_yticks(range(len(depths)), [str(d) for d in depths])
    ax.set_xlabel("similarity threshold")
    ax.set_ylabel("tree depth")
    ax.set_title("calibration scores")
    chosen = result.chosen
    ax.scatter(
        [sims.index(chosen.sim_threshold)],
        [depths.index(chosen.tree_depth)],
        marker="*",
        s=220,
        c="red",
        label="chosen",
    )
    ax.legend(loc="upper right")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_metric_bars(report: dict, path: str | Path) -> Path:
    keys = [
        "grouping_accuracy",
        "token_accuracy",
        "unsupervised_score",
        "precision",
        "recall",
        "f1",
    ]
    values = [report.get(k) for k in keys]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    xs = np.arange(len(keys))
    bars = [v if isinstance(v, (int, float)) else 0.0 for v in values]
    ax.bar(xs, bars, color="steelblue")
    for x, v in zip(xs, values):
        label = f"{v:.3f}" if isinstance(v, (int, float)) else "n/a"
        ax.text(x, (v or 0) + 0.02, label, ha="center", fontsize=8)
    ax.set_xticks(xs, keys, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_title("parsing and detection metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_template_supports(templates: Sequence[dict], path: str | Path) -> Path:
    """Support distribution of the mined templates, largest first."""
    supports = sorted((t["support"] for t in templates), reverse=True)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(range(len(supports)), supports, color="darkseagreen")
    ax.set_xlabel("template rank")
    ax.set_ylabel("matched lines")
    ax.set_title(f"template supports ({len(supports)} templates)")
    if supports and supports[0] > 50 * max(supports[-1], 1):
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_anomaly_timeline(reports: Sequence[dict], path: str | Path) -> Path:
    """Trigger positions vs score, one marker style per trigger kind."""
    fig, ax = plt.subplots(figsize=(8, 3.5))
    styles = {"sequential": ("tab:red", "o"), "quantitative": ("tab:orange", "^")}
    for kind, (color, marker) in styles.items():
        xs = [
            r["trigger_record"]["seq_no"] for r in reports if r["trigger"] == kind
        ]
        ys = [min(r["score"], 1e6) for r in reports if r["trigger"] == kind]
        if xs:
            ax.scatter(xs, ys, c=color, marker=marker, s=24, label=kind, alpha=0.8)
    ax.set_xlabel("stream position (seq_no)")
    ax.set_ylabel("score")
    ax.set_title(f"anomaly reports ({len(reports)})")
    if reports:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
