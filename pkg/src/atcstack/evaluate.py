"""Batch evaluation of checkpoints: seeded episode populations and statistics.

Evaluation seeds follow a documented schedule (base seed + episode index)
so an "N episodes" population is a fixed, reproducible set.  Output files
carry no timestamps and use sorted keys, so identical inputs give
byte-identical stats.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .airspace import Sector
from .env import AtcEnv
from .ppo import PolicyCheckpoint
from .scenario import VERTICAL, generate
from .stacking import EpisodeRecord, run_stacked_episode, run_unstacked_episode

SEPARATION_STANDARD_NM = 5.0
HISTOGRAM_BIN_WIDTH = 5
EPISODES_SCHEMA = "atcstack-episodes-v1"
MACROS_SCHEMA = "atcstack-macros-v1"
STATS_SCHEMA = "atcstack-stats-v1"


@dataclass
class EvalStats:
    """Aggregate statistics over one evaluated episode population."""

    episodes: int
    mode: str
    mean_instructions: float
    std_instructions: float
    instruction_histogram: dict[int, int]        # bin lower edge -> episode count
    min_separations: list[float] = field(default_factory=list)
    losses_of_separation: int = 0
    exit_rate: float = 0.0
    bounds_rate: float = 0.0
    budget_rate: float = 0.0
    success_rate: float = 0.0
    mean_reward: float = 0.0
    mean_steps: float = 0.0

    @classmethod
    def from_records(cls, records: list[EpisodeRecord], mode: str) -> "EvalStats":
        if not records:
            raise ValueError("no episodes to aggregate")
        counts = np.array([r.instruction_count for r in records], dtype=float)
        histogram: dict[int, int] = {}
        for count in counts:
            edge = int(count // HISTOGRAM_BIN_WIDTH) * HISTOGRAM_BIN_WIDTH
            histogram[edge] = histogram.get(edge, 0) + 1
        separations = [r.min_separation_nm for r in records if r.min_separation_nm is not None]
        return cls(
            episodes=len(records),
            mode=mode,
            mean_instructions=float(counts.mean()),
            std_instructions=float(counts.std()),
            instruction_histogram=dict(sorted(histogram.items())),
            min_separations=separations,
            losses_of_separation=sum(1 for s in separations if s < SEPARATION_STANDARD_NM),
            exit_rate=float(np.mean([r.exited_at_target for r in records])),
            bounds_rate=float(np.mean([r.stayed_in_bounds for r in records])),
            budget_rate=float(np.mean([r.within_action_budget for r in records])),
            success_rate=float(np.mean([r.success for r in records])),
            mean_reward=float(np.mean([r.reward for r in records])),
            mean_steps=float(np.mean([r.steps for r in records])),
        )

    def to_document(self) -> dict:
        return {
            "schema": STATS_SCHEMA,
            "episodes": self.episodes,
            "mode": self.mode,
            "instructions": {
                "mean": round(self.mean_instructions, 6),
                "std": round(self.std_instructions, 6),
                "histogram_bin_width": HISTOGRAM_BIN_WIDTH,
                "histogram": {str(k): v for k, v in self.instruction_histogram.items()},
            },
            "min_separation_nm": [round(s, 6) for s in self.min_separations],
            "losses_of_separation": self.losses_of_separation,
            "separation_standard_nm": SEPARATION_STANDARD_NM,
            "success_rates": {
                "exited_at_target": round(self.exit_rate, 6),
                "stayed_in_bounds": round(self.bounds_rate, 6),
                "within_action_budget": round(self.budget_rate, 6),
                "overall": round(self.success_rate, 6),
            },
            "mean_reward": round(self.mean_reward, 6),
            "mean_steps": round(self.mean_steps, 6),
        }


def evaluation_seeds(base_seed: int, episodes: int) -> list[int]:
    """The documented evaluation schedule: base seed plus episode index."""
    return [base_seed + i for i in range(episodes)]


def _run_one(
    checkpoint: PolicyCheckpoint,
    sector: Sector,
    seed: int,
    mode: str,
    record_trace: bool,
    record_positions: bool,
) -> EpisodeRecord:
    env = AtcEnv(sector, checkpoint.action_space_kind)
    scenario = generate(sector, seed, checkpoint.env_kind)
    runner = run_stacked_episode if mode == "stacked" else run_unstacked_episode
    return runner(
        checkpoint.policy,
        env,
        scenario,
        checkpoint.weights,
        checkpoint.reward_config,
        record_trace=record_trace,
        record_positions=record_positions,
    )


def run_evaluation(
    checkpoint: PolicyCheckpoint,
    sector: Sector,
    episodes: int,
    base_seed: int,
    mode: str = "unstacked",
    workers: int = 1,
    record_trace: bool = False,
    record_positions: bool = False,
) -> tuple[EvalStats, list[EpisodeRecord]]:
    """Evaluate a checkpoint over the seeded population, optionally in parallel.

    Results are ordered by episode index regardless of completion order.
    """
    if mode not in ("stacked", "unstacked"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    seeds = evaluation_seeds(base_seed, episodes)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            records = list(
                executor.map(
                    _run_one,
                    [checkpoint] * episodes,
                    [sector] * episodes,
                    seeds,
                    [mode] * episodes,
                    [record_trace] * episodes,
                    [record_positions] * episodes,
                )
            )
    else:
        records = [_run_one(checkpoint, sector, seed, mode, record_trace, record_positions) for seed in seeds]
    return EvalStats.from_records(records, mode), records


def compare_evaluations(
    checkpoint_a: PolicyCheckpoint,
    checkpoint_b: PolicyCheckpoint,
    sector: Sector,
    episodes: int,
    base_seed: int,
    mode_a: str = "unstacked",
    mode_b: str = "unstacked",
    workers: int = 1,
) -> dict:
    """Paired evaluation of two checkpoints over identical scenario seeds."""
    if checkpoint_a.env_kind != checkpoint_b.env_kind:
        raise ValueError(
            "checkpoints evaluate different scenario kinds: "
            f"{checkpoint_a.env_kind!r} vs {checkpoint_b.env_kind!r}"
        )
    stats_a, records_a = run_evaluation(checkpoint_a, sector, episodes, base_seed, mode_a, workers)
    stats_b, records_b = run_evaluation(checkpoint_b, sector, episodes, base_seed, mode_b, workers)
    pairs = []
    for seed, rec_a, rec_b in zip(evaluation_seeds(base_seed, episodes), records_a, records_b):
        pairs.append(
            {
                "seed": seed,
                "instructions_a": rec_a.instruction_count,
                "instructions_b": rec_b.instruction_count,
                "min_separation_a": rec_a.min_separation_nm,
                "min_separation_b": rec_b.min_separation_nm,
                "success_a": rec_a.success,
                "success_b": rec_b.success,
            }
        )
    return {"a": stats_a.to_document(), "b": stats_b.to_document(), "pairs": pairs}


# -- delimited output ---------------------------------------------------------


def write_stats(stats: EvalStats, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stats.to_document(), sort_keys=True, indent=2) + "\n")


def write_episode_rows(records: list[EpisodeRecord], path: str | Path) -> None:
    """One row per evaluated episode, index-ordered."""
    fieldnames = [
        "episode", "scenario_seed", "mode", "steps", "instructions",
        "actions_per_aircraft", "reward", "min_separation_nm",
        "exited_at_target", "stayed_in_bounds", "within_action_budget", "success",
    ]
    with open(path, "w", newline="") as handle:
        handle.write(f"# {EPISODES_SCHEMA}\n")
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for index, record in enumerate(records):
            writer.writerow(
                {
                    "episode": index,
                    "scenario_seed": record.scenario_seed,
                    "mode": record.mode,
                    "steps": record.steps,
                    "instructions": record.instruction_count,
                    "actions_per_aircraft": "/".join(str(c) for c in record.action_counts),
                    "reward": f"{record.reward:.6f}",
                    "min_separation_nm": "" if record.min_separation_nm is None else f"{record.min_separation_nm:.6f}",
                    "exited_at_target": record.exited_at_target,
                    "stayed_in_bounds": record.stayed_in_bounds,
                    "within_action_budget": record.within_action_budget,
                    "success": record.success,
                }
            )


def write_trace(record: EpisodeRecord, path: str | Path) -> None:
    """Per-step trace in the environment's versioned schema."""
    if not record.trace_rows:
        raise ValueError("episode was run without trace recording")
    fieldnames = list(record.trace_rows[0].keys())
    with open(path, "w", newline="") as handle:
        handle.write("# atcstack-trace-v1\n")
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in record.trace_rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def write_macros(record: EpisodeRecord, path: str | Path) -> None:
    """The macro table accompanying a stacked trace."""
    fieldnames = ["step", "target", "kind", "magnitude", "primitive_count"]
    with open(path, "w", newline="") as handle:
        handle.write(f"# {MACROS_SCHEMA}\n")
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for step, macro in record.macros:
            writer.writerow(
                {
                    "step": step,
                    "target": macro.target,
                    "kind": macro.kind,
                    "magnitude": macro.magnitude,
                    "primitive_count": macro.primitive_count,
                }
            )


def write_pairing_table(pairs: list[dict], path: str | Path) -> None:
    fieldnames = [
        "seed", "instructions_a", "instructions_b",
        "min_separation_a", "min_separation_b", "success_a", "success_b",
    ]
    with open(path, "w", newline="") as handle:
        handle.write("# atcstack-pairs-v1\n")
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for pair in pairs:
            row = dict(pair)
            for key in ("min_separation_a", "min_separation_b"):
                row[key] = "" if row[key] is None else f"{row[key]:.6f}"
            writer.writerow(row)
