"""Matplotlib renderings written alongside the delimited outputs.

Static report figures only: instruction-count histograms, per-episode
minimum separation charts, sector/trajectory plots and training curves.
Files are written headlessly (Agg) with date metadata stripped so repeated
runs produce stable output.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .airspace import Sector
from .evaluate import SEPARATION_STANDARD_NM, EvalStats
from .stacking import EpisodeRecord

FIGURE_DPI = 150


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if path.suffix == ".svg" else None
    fig.savefig(path, dpi=FIGURE_DPI, bbox_inches="tight", metadata=metadata)
    plt.close(fig)
    return path


def instruction_histogram(stats: EvalStats, path: str | Path, title: str | None = None) -> Path:
    """Per-episode instruction counts with the mean/std annotated."""
    counts = []
    for record_bin, n in stats.instruction_histogram.items():
        counts.extend([record_bin] * n)
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = sorted(stats.instruction_histogram)
    width = 5
    ax.bar(
        [e + width / 2 for e in edges],
        [stats.instruction_histogram[e] for e in edges],
        width=width * 0.9,
        color="tab:blue",
        edgecolor="black",
        linewidth=0.5,
    )
    ax.axvline(stats.mean_instructions, color="tab:red", linestyle="--",
               label=f"mean {stats.mean_instructions:.1f} (std {stats.std_instructions:.1f})")
    ax.set_xlabel("instructions per episode")
    ax.set_ylabel("episodes")
    ax.set_title(title or f"Instructions per episode ({stats.mode}, n={stats.episodes})")
    ax.legend()
    return _save(fig, path)


def separation_figure(stats: EvalStats, path: str | Path, title: str | None = None) -> Path:
    """Minimum separation achieved per episode against the 5 nm standard."""
    fig, ax = plt.subplots(figsize=(6, 4))
    seps = stats.min_separations
    ax.scatter(range(len(seps)), seps, s=12, color="tab:blue")
    ax.axhline(SEPARATION_STANDARD_NM, color="tab:red", linestyle="--",
               label=f"{SEPARATION_STANDARD_NM:.0f} nm separation standard")
    ax.set_xlabel("episode")
    ax.set_ylabel("minimum separation (nm)")
    ax.set_ylim(bottom=0)
    ax.set_title(title or f"Minimum separation per episode ({stats.mode}, n={stats.episodes})")
    ax.legend()
    return _save(fig, path)


def _draw_sector(ax, sector: Sector) -> None:
    half = sector.bounding_box_nm / 2.0
    ax.add_patch(plt.Rectangle((-half, -half), 2 * half, 2 * half, fill=False,
                               edgecolor="gray", linewidth=1.0, linestyle=":"))
    drawn: set[tuple[str, str]] = set()
    for route in sector.route_list():
        for a, b in zip(route.fixes, route.fixes[1:]):
            key = tuple(sorted((a.name, b.name)))
            if key in drawn:
                continue
            drawn.add(key)
            ax.plot([a.east, b.east], [a.north, b.north], color="lightsteelblue",
                    linewidth=sector.airway_half_width_nm / 2, alpha=0.35, zorder=0)
            ax.plot([a.east, b.east], [a.north, b.north], color="steelblue",
                    linewidth=0.8, alpha=0.8, zorder=1)
    for fix in sector.fixes.values():
        ax.plot(fix.east, fix.north, marker="^", color="black", markersize=4, zorder=2)
        ax.annotate(fix.name, (fix.east, fix.north), textcoords="offset points",
                    xytext=(4, 4), fontsize=6)
    ax.set_aspect("equal")
    ax.set_xlabel("east (nm)")
    ax.set_ylabel("north (nm)")


def trajectory_figure(sector: Sector, record: EpisodeRecord, path: str | Path, title: str | None = None) -> Path:
    """Flown tracks over the sector, with issued-command markers."""
    if not record.positions:
        raise ValueError("episode was run without position recording")
    fig, ax = plt.subplots(figsize=(7, 7))
    _draw_sector(ax, sector)
    n_aircraft = len(record.positions[0])
    colors = ["tab:orange", "tab:green", "tab:purple"]
    for i in range(n_aircraft):
        track = np.array([step[i] for step in record.positions])
        ax.plot(track[:, 0], track[:, 1], color=colors[i % len(colors)],
                linewidth=1.4, zorder=3, label=f"aircraft {i + 1}")
        ax.plot(track[0, 0], track[0, 1], marker="o", color=colors[i % len(colors)], zorder=4)
    for step, macro in record.macros:
        if step < len(record.positions) and macro.target in record.callsigns:
            east, north = record.positions[step][record.callsigns.index(macro.target)]
            ax.plot(east, north, marker="x", color="red", markersize=5, zorder=5)
    ax.set_title(title or f"{record.mode} episode, seed {record.scenario_seed}, "
                          f"{record.instruction_count} instructions")
    ax.legend(loc="lower left", fontsize=7)
    return _save(fig, path)


def training_curves(log_path: str | Path, path: str | Path, title: str | None = None) -> Path:
    """Mean episode reward and terminal success rate over training steps."""
    updates: list[dict] = []
    evals: list[dict] = []
    with open(log_path) as handle:
        for line in handle:
            record = json.loads(line)
            if record.get("type") == "update" and record.get("episodes", 0) > 0:
                updates.append(record)
            elif record.get("type") == "eval":
                evals.append(record)
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    if updates:
        steps = [r["step"] for r in updates]
        ax0.plot(steps, [r["mean_reward"] for r in updates], color="tab:blue",
                 alpha=0.4, label="rollout episodes")
    if evals:
        steps = [r["step"] for r in evals]
        ax0.plot(steps, [r["mean_reward"] for r in evals], color="tab:red",
                 marker="o", markersize=3, label="greedy eval")
        ax1.plot(steps, [r["success_rate"] for r in evals], color="tab:red",
                 marker="o", markersize=3)
    ax0.set_ylabel("mean episode reward")
    ax0.legend(fontsize=7)
    ax1.set_ylabel("success rate")
    ax1.set_xlabel("environment steps")
    ax1.set_ylim(-0.05, 1.05)
    ax1.axhline(0.5, color="gray", linewidth=0.7, linestyle=":")
    if title:
        ax0.set_title(title)
    return _save(fig, path)


def comparison_figure(report: dict, path: str | Path, label_a: str = "A", label_b: str = "B") -> Path:
    """Side-by-side instruction counts and separation minima for two runs."""
    pairs = report["pairs"]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
    idx = np.arange(len(pairs))
    ax0.bar(idx - 0.2, [p["instructions_a"] for p in pairs], width=0.4, label=label_a, color="tab:blue")
    ax0.bar(idx + 0.2, [p["instructions_b"] for p in pairs], width=0.4, label=label_b, color="tab:orange")
    ax0.set_xlabel("episode")
    ax0.set_ylabel("instructions")
    ax0.legend(fontsize=7)

    sep_a = [p["min_separation_a"] for p in pairs if p["min_separation_a"] is not None]
    sep_b = [p["min_separation_b"] for p in pairs if p["min_separation_b"] is not None]
    if sep_a and sep_b:
        ax1.scatter(range(len(sep_a)), sep_a, s=10, label=label_a, color="tab:blue")
        ax1.scatter(range(len(sep_b)), sep_b, s=10, label=label_b, color="tab:orange")
        ax1.axhline(SEPARATION_STANDARD_NM, color="tab:red", linestyle="--", linewidth=0.8)
        ax1.set_xlabel("episode")
        ax1.set_ylabel("minimum separation (nm)")
        ax1.set_ylim(bottom=0)
        ax1.legend(fontsize=7)
    else:
        ax1.axis("off")
    return _save(fig, path)
