"""Inference-time compilation of primitive bursts into compound clearances.

At a decision point the simulation clock is frozen: the policy is queried
repeatedly, each chosen primitive updates only the targeted aircraft's
commanded heading or level (positions, flown headings and altitudes stay
untouched), and the observation is rebuilt so every query is conditioned
on a fully observed state.  Consecutive identical-direction primitives for
one aircraft merge into a single macro-command; a direction flip chains a
new macro, a switch to the other aircraft starts that aircraft's macro,
and the no-action choice ends the decision point.  The training MDP is
never altered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import Command
from .env import AtcEnv, StepResult
from .ppo import MLPPolicy, greedy_action, sample_action
from .rewards import RewardConfig, RewardWeights
from .scenario import Scenario

MAX_PRIMITIVES_PER_MACRO = 18   # caps a heading macro at a 180-degree turn
MAX_QUERIES_PER_DECISION = 40

ActionSelector = Callable[[np.ndarray], int]


class StackingError(RuntimeError):
    pass


@dataclass
class MacroCommand:
    """A compiled compound clearance, counted as one instruction."""

    target: str
    kind: str              # "heading" | "level"
    magnitude: int         # signed degrees or flight levels
    primitive_count: int

    def __post_init__(self) -> None:
        if self.primitive_count < 1:
            raise StackingError("macro must contain at least one primitive")
        if abs(self.magnitude) != 10 * self.primitive_count:
            raise StackingError(
                f"macro magnitude {self.magnitude} inconsistent with {self.primitive_count} primitives"
            )


@dataclass
class StackTrace:
    """Audit log of one decision point: every query and its outcome."""

    entries: list[tuple[int, np.ndarray, int]] = field(default_factory=list)
    stop_reason: str = ""   # "no_action" | "cap" | "exited_target"


def make_selector(policy: MLPPolicy, sampled: bool = False, rng: np.random.Generator | None = None) -> ActionSelector:
    """Wrap a policy as an observation -> action-index callable."""
    if sampled:
        if rng is None:
            raise ValueError("sampled selection needs an rng")
        return lambda obs: sample_action(policy, obs, rng)
    return lambda obs: greedy_action(policy, obs)


def stacked_decision(
    select_action: ActionSelector | MLPPolicy,
    env: AtcEnv,
    max_primitives: int = MAX_PRIMITIVES_PER_MACRO,
    max_queries: int = MAX_QUERIES_PER_DECISION,
) -> tuple[list[MacroCommand], StackTrace]:
    """Compile one frozen-clock burst of primitives into macro-commands.

    Returns the macros in the order they were opened, plus the query
    trace.  The environment's aircraft positions and altitudes are
    bit-identical before and after; only commanded values and the
    targets' time-since-action clocks change.
    """
    if env.done:
        raise StackingError("episode is done; nothing to decide")
    if isinstance(select_action, MLPPolicy):
        select_action = make_selector(select_action)

    macros: list[MacroCommand] = []
    trace = StackTrace()
    current: MacroCommand | None = None

    for query in range(max_queries):
        observation = env.build_observation()
        action = select_action(observation)
        trace.entries.append((query, observation, action))
        command = env.decode_action(action)

        if command is None:
            trace.stop_reason = "no_action"
            break
        target_state = env.aircraft[env.action_space.callsigns.index(command.target)]
        if target_state.exited:
            # Nothing can change, so the greedy loop would never leave
            # this state: treat like the no-action choice.
            trace.stop_reason = "exited_target"
            break

        same_macro = (
            current is not None
            and current.target == command.target
            and current.kind == command.kind
            and np.sign(current.magnitude) == np.sign(command.delta)
        )
        if same_macro and current.primitive_count >= max_primitives:
            trace.stop_reason = "cap"
            break
        env.apply_frozen_primitive(command)
        if same_macro:
            current.magnitude += command.delta
            current.primitive_count += 1
        else:
            current = MacroCommand(
                target=command.target, kind=command.kind, magnitude=command.delta, primitive_count=1
            )
            macros.append(current)
    else:
        trace.stop_reason = "cap"

    return macros, trace


@dataclass
class EpisodeRecord:
    """Outcome of one evaluated episode, stacked or unstacked."""

    scenario_seed: int
    mode: str                     # "stacked" | "unstacked"
    callsigns: tuple[str, ...]
    steps: int
    instruction_count: int
    action_counts: tuple[int, ...]
    reward: float
    exited_at_target: bool
    stayed_in_bounds: bool
    within_action_budget: bool
    success: bool
    min_separation_nm: float | None
    macros: list[tuple[int, MacroCommand]] = field(default_factory=list)  # (step, macro)
    trace_rows: list[dict] = field(default_factory=list)
    positions: list[tuple[tuple[float, float], ...]] = field(default_factory=list)
    stack_stops: dict[str, int] = field(default_factory=dict)


def _summarize(env: AtcEnv, result: StepResult, weights: RewardWeights) -> tuple[bool, bool, bool, bool]:
    summary = result.info["criteria"]
    included = [summary.exited_at_target, summary.stayed_in_bounds]
    if weights.include_action_criterion:
        included.append(summary.within_action_budget)
    return (
        summary.exited_at_target,
        summary.stayed_in_bounds,
        summary.within_action_budget,
        all(included),
    )


def _trace_row(env: AtcEnv, result: StepResult) -> dict:
    info = result.info
    command = info["command"]
    report = info["separation"]
    row: dict = {"step": info["step"], "action_index": info["action_index"]}
    for i, state in enumerate(env.aircraft, start=1):
        row.update(
            {
                f"ac{i}_callsign": state.callsign,
                f"ac{i}_east_nm": state.east,
                f"ac{i}_north_nm": state.north,
                f"ac{i}_heading_deg": state.heading,
                f"ac{i}_cleared_deg": state.cleared_heading,
                f"ac{i}_altitude_ft": state.altitude_ft,
                f"ac{i}_selected_fl": state.selected_fl,
                f"ac{i}_exited": state.exited,
            }
        )
    row.update(
        {
            "command_target": "" if command is None else command.target,
            "command_kind": "" if command is None else command.kind,
            "command_delta": "" if command is None else command.delta,
            "r_centreline": info["components"]["centreline"],
            "r_damping": info["components"]["damping"],
            "r_safety": info["components"]["safety"],
            "r_vertical": info["components"]["vertical"],
            "reward_total": result.reward,
            "separation_nm": "" if report is None else report.current_nm,
            "projected_min_nm": "" if report is None else report.projected_min_nm,
        }
    )
    return row


def run_unstacked_episode(
    policy: MLPPolicy | ActionSelector,
    env: AtcEnv,
    scenario: Scenario,
    weights: RewardWeights,
    config: RewardConfig | None = None,
    sampled: bool = False,
    rng: np.random.Generator | None = None,
    record_trace: bool = False,
    record_positions: bool = False,
) -> EpisodeRecord:
    """One primitive per environment step; every applied primitive counts."""
    select = make_selector(policy, sampled, rng) if isinstance(policy, MLPPolicy) else policy
    obs = env.reset(scenario, weights, config)
    instructions = 0
    reward = 0.0
    record = EpisodeRecord(
        scenario_seed=scenario.seed, mode="unstacked",
        callsigns=tuple(s.callsign for s in env.aircraft), steps=0, instruction_count=0,
        action_counts=(), reward=0.0, exited_at_target=False, stayed_in_bounds=False,
        within_action_budget=False, success=False, min_separation_nm=None,
    )
    if record_positions:
        record.positions.append(tuple(s.position for s in env.aircraft))
    result = None
    while not env.done:
        result = env.step(select(obs))
        obs = result.observation
        reward += result.reward
        if result.info["command"] is not None:
            instructions += 1
        if record_trace:
            record.trace_rows.append(_trace_row(env, result))
        if record_positions:
            record.positions.append(tuple(s.position for s in env.aircraft))
    exited, bounds, budget, success = _summarize(env, result, weights)
    record.steps = env.step_count
    record.instruction_count = instructions
    record.action_counts = result.info["action_counts"]
    record.reward = reward
    record.exited_at_target = exited
    record.stayed_in_bounds = bounds
    record.within_action_budget = budget
    record.success = success
    record.min_separation_nm = env.min_separation_nm
    return record


def run_stacked_episode(
    policy: MLPPolicy | ActionSelector,
    env: AtcEnv,
    scenario: Scenario,
    weights: RewardWeights,
    config: RewardConfig | None = None,
    sampled: bool = False,
    rng: np.random.Generator | None = None,
    max_primitives: int = MAX_PRIMITIVES_PER_MACRO,
    max_queries: int = MAX_QUERIES_PER_DECISION,
    record_trace: bool = False,
    record_positions: bool = False,
) -> EpisodeRecord:
    """Stacked decision point at every step; each macro counts once."""
    select = make_selector(policy, sampled, rng) if isinstance(policy, MLPPolicy) else policy
    env.reset(scenario, weights, config)
    reward = 0.0
    record = EpisodeRecord(
        scenario_seed=scenario.seed, mode="stacked",
        callsigns=tuple(s.callsign for s in env.aircraft), steps=0, instruction_count=0,
        action_counts=(), reward=0.0, exited_at_target=False, stayed_in_bounds=False,
        within_action_budget=False, success=False, min_separation_nm=None,
    )
    if record_positions:
        record.positions.append(tuple(s.position for s in env.aircraft))
    result = None
    while not env.done:
        macros, trace = stacked_decision(select, env, max_primitives, max_queries)
        record.stack_stops[trace.stop_reason] = record.stack_stops.get(trace.stop_reason, 0) + 1
        for macro in macros:
            record.macros.append((env.step_count, macro))
        record.instruction_count += len(macros)
        result = env.advance_after_macros([m.target for m in macros])
        reward += result.reward
        if record_trace:
            record.trace_rows.append(_trace_row(env, result))
        if record_positions:
            record.positions.append(tuple(s.position for s in env.aircraft))
    exited, bounds, budget, success = _summarize(env, result, weights)
    record.steps = env.step_count
    record.action_counts = result.info["action_counts"]
    record.reward = reward
    record.exited_at_target = exited
    record.stayed_in_bounds = bounds
    record.within_action_budget = budget
    record.success = success
    record.min_separation_nm = env.min_separation_nm
    return record
