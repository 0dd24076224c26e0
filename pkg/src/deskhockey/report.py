"""Report rendering: delimited tables and matplotlib figures written per run.

Every harness command drops its numbers as CSV next to a rendered figure so
runs can be inspected without re-loading anything into a notebook.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def write_csv(path, header: list[str], rows) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def _finish(fig, path) -> str:
    os.makedirs(os.path.dirname(str(path)) or ".", exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def match_timeline_figure(events, match_steps: int, path) -> str:
    """Event raster of one match: goals, faults, and stuck resets over time."""
    fig, ax = plt.subplots(figsize=(9, 2.8))
    lanes = {"goal": 2, "fault": 1, "stuck_reset": 0}
    colors = {"A": "tab:red", "B": "tab:blue", "none": "tab:gray"}
    for event in events:
        kind = event.kind.value
        if kind not in lanes:
            continue
        side = event.side.value if event.side is not None else "none"
        ax.scatter(event.step_index, lanes[kind], marker="|", s=320, color=colors[side])
    ax.set_yticks(list(lanes.values()), list(lanes.keys()))
    ax.set_xlim(0, match_steps)
    ax.set_xlabel("control step")
    ax.set_title("match events (red: against A, blue: against B)")
    return _finish(fig, path)


def tournament_heatmap_figure(names: list[str], mean_points: np.ndarray, path) -> str:
    """Row-vs-column mean points heatmap for a round-robin table."""
    fig, ax = plt.subplots(figsize=(1.1 * len(names) + 2.5, 1.0 * len(names) + 2))
    im = ax.imshow(mean_points, cmap="viridis")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    for i in range(len(names)):
        for j in range(len(names)):
            if i == j:
                continue
            ax.text(j, i, f"{mean_points[i, j]:.2f}", ha="center", va="center", color="w")
    ax.set_title("mean points per match (row vs column)")
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _finish(fig, path)


def learning_curve_figure(histories: dict[str, list[tuple[int, float, float]]], path) -> str:
    """Per-generation mean/best return curves, one line pair per run label."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, history in histories.items():
        if not history:
            continue
        gens = [h[0] for h in history]
        mean = [h[1] for h in history]
        best = [h[2] for h in history]
        (line,) = ax.plot(gens, mean, label=f"{label} (mean)")
        ax.plot(gens, best, linestyle="--", alpha=0.5, color=line.get_color())
    ax.set_xlabel("generation")
    ax.set_ylabel("episode return")
    ax.legend()
    ax.set_title("training return")
    return _finish(fig, path)


def latency_histogram_figure(latencies_ms: np.ndarray, budget_ms: float, path) -> str:
    """Control-step wall-clock distribution against the cycle budget."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(latencies_ms, bins=60, color="tab:blue", alpha=0.8)
    p99 = float(np.percentile(latencies_ms, 99))
    ax.axvline(p99, color="tab:orange", label=f"p99 = {p99:.3f} ms")
    ax.axvline(budget_ms, color="tab:red", linestyle="--", label=f"budget = {budget_ms:.0f} ms")
    ax.set_xlabel("control step latency (ms)")
    ax.set_ylabel("steps")
    ax.legend()
    ax.set_title("per-step compute latency")
    return _finish(fig, path)
