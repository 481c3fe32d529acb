"""Figure rendering: metric-vs-K curves and reverse-sampling traces."""

import json
import os
from typing import Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

METRICS = ("rmse", "ade", "fde", "mr")


def plot_metric_vs_k(rows: Sequence[dict], out_path: str,
                     horizon_s: Optional[float] = None):
    """Ablation rows -> 2x2 grid of metric curves over diffusion steps K."""
    rows = [r for r in rows if r.get("error") is None
            and (horizon_s is None or r["horizon_s"] == horizon_s)]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    scenarios = sorted({r.get("schedule", "linear") for r in rows})
    for ax, metric in zip(axes.ravel(), METRICS):
        for kind in scenarios:
            pts = sorted((r["K"], r[metric]) for r in rows
                         if r.get("schedule", "linear") == kind)
            if pts:
                ks, vals = zip(*pts)
                ax.plot(ks, vals, marker="o", label=kind)
        ax.set_xlabel("diffusion steps K")
        ax.set_ylabel(metric.upper())
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_sampling_trace(trace_path: str, out_path: str, max_panels: int = 6):
    """Render per-step trajectories from a JSON-lines trace file.

    Each line is {"k": int, "positions": [[x, y], ...],
    "abs_error_if_gt_known": [..] or null}; panels are spread over the
    reverse steps from chaotic noise to the final prediction.
    """
    records = []
    with open(trace_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    if not records:
        raise ValueError(f"{trace_path}: empty trace")
    records.sort(key=lambda r: -r["k"])
    idx = np.linspace(0, len(records) - 1, min(max_panels, len(records)))
    picks = [records[int(i)] for i in idx]
    fig, axes = plt.subplots(1, len(picks), figsize=(3 * len(picks), 3),
                             squeeze=False)
    for ax, rec in zip(axes[0], picks):
        pos = np.asarray(rec["positions"])
        t = np.arange(len(pos))
        err = rec.get("abs_error_if_gt_known")
        color = np.asarray(err) if err is not None else None
        sc = ax.scatter(t, pos[:, 0], c=color, cmap="viridis", s=12,
                        marker="x")
        if color is not None:
            fig.colorbar(sc, ax=ax, shrink=0.8)
        ax.set_title(f"k={rec['k']}")
        ax.set_xlabel("future step")
        ax.set_ylabel("longitudinal position [m]")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def write_trace_jsonl(steps, path: str, gt: Optional[np.ndarray] = None,
                      case: int = 0):
    """Serialize sampler snapshots for one case as trace JSON-lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for k, x in steps:
            pos = np.asarray(x)[case]
            err = None
            if gt is not None:
                err = np.linalg.norm(pos - gt, axis=-1).tolist()
            fh.write(json.dumps({
                "k": int(k),
                "positions": pos.tolist(),
                "abs_error_if_gt_known": err,
            }) + "\n")
    return path
