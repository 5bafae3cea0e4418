"""The centralized MDP over the sector simulator.

One environment instance drives one episode at a time: discrete action
indices decode to heading/level clearances, every aircraft advances in
fixed six-second steps, and the shaped rewards are assembled into a
weighted scalar.  Observation vectors are normalized to [0, 1] using the
fixed feature ranges below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .airspace import Sector, bearing_to, cross_track_distance, relative_turn
from .dynamics import AircraftState, Command, SIM_STEP_SECONDS, apply_command, own_navigation, step_aircraft
from .rewards import (
    EpisodeSummary,
    RewardConfig,
    RewardWeights,
    StepComponents,
    centreline_reward,
    damping_reward,
    safety_reward,
    terminal_rewards,
    total_step_reward,
    vertical_reward,
)
from .safety import SeparationReport, project_min_separation, relative_bearing, separation
from .scenario import (
    LATERAL_AVOIDANCE,
    LATERAL_NAV,
    VERTICAL,
    AircraftTarget,
    Scenario,
    _aircraft_from_doc,
    _aircraft_to_doc,
)

ENV_STATE_FORMAT_VERSION = 1
TRACE_SCHEMA = "atcstack-trace-v1"

# Feature clip ranges from the state tables.  The vertical scenarios use a
# tighter time-since-action clip than one simulator step; implemented as
# specified and overridable through the constructor.
TURN_RANGE = (-180.0, 180.0)
XTRACK_RANGE = (-100.0, 100.0)
LATERAL_TIME_RANGE = (0.0, 60.0)
VERTICAL_TIME_RANGE = (0.0, 10.0)
PAIR_DISTANCE_RANGE = (0.0, 150.0)
LEVEL_LEAD_RANGE = (-100.0, 100.0)
LEVEL_DIFF_RANGE = (-200.0, 200.0)

LATERAL_SMALL = "lateral_small"
LATERAL_LARGE = "lateral_large"
VERTICAL_SPACE = "vertical"

OBS_WIDTH = {LATERAL_NAV: 8, LATERAL_AVOIDANCE: 10, VERTICAL: 4}


class EnvError(RuntimeError):
    """Raised for invalid environment usage (bad action, stepping when done)."""


def default_action_space_kind(scenario_kind: str, large_actions: bool = False) -> str:
    if scenario_kind == VERTICAL:
        return VERTICAL_SPACE
    return LATERAL_LARGE if large_actions else LATERAL_SMALL


@dataclass(frozen=True)
class ActionSpace:
    """Indexed discrete actions; index 0 is always the no-action choice.

    The enumeration order is normative so checkpoints stay portable:
    aircraft are ordered as in the scenario, and within one aircraft the
    deltas run -10..-90 then +10..+90 (the small space is just +/-10).
    """

    kind: str
    callsigns: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.kind not in (LATERAL_SMALL, LATERAL_LARGE, VERTICAL_SPACE):
            raise EnvError(f"unknown action space kind {self.kind!r}")

    @property
    def deltas(self) -> tuple[int, ...]:
        if self.kind == LATERAL_LARGE:
            return tuple(range(-10, -91, -10)) + tuple(range(10, 91, 10))
        return (-10, 10)

    @property
    def size(self) -> int:
        return 1 + len(self.callsigns) * len(self.deltas)

    def decode(self, index: int) -> Command | None:
        if not 0 <= index < self.size:
            raise EnvError(f"action index {index} out of range for size {self.size}")
        if index == 0:
            return None
        per_aircraft = len(self.deltas)
        aircraft_idx, delta_idx = divmod(index - 1, per_aircraft)
        kind = "level" if self.kind == VERTICAL_SPACE else "heading"
        return Command(target=self.callsigns[aircraft_idx], kind=kind, delta=self.deltas[delta_idx])

    def describe(self, index: int) -> str:
        command = self.decode(index)
        if command is None:
            return "no-action"
        unit = "deg" if command.kind == "heading" else "FL"
        return f"{command.target} {command.kind} {command.delta:+d} {unit}"


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def _norm(value: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    clipped = max(lo, min(hi, value))
    return (clipped - lo) / (hi - lo)


class AtcEnv:
    """Fixed-step episodic environment over one scenario at a time.

    Instances are single-threaded; run several independent instances for
    parallel rollouts.
    """

    def __init__(
        self,
        sector: Sector,
        action_space_kind: str = LATERAL_SMALL,
        lateral_time_range: tuple[float, float] = LATERAL_TIME_RANGE,
        vertical_time_range: tuple[float, float] = VERTICAL_TIME_RANGE,
    ):
        self.sector = sector
        self.action_space_kind = action_space_kind
        self.lateral_time_range = lateral_time_range
        self.vertical_time_range = vertical_time_range
        self.scenario: Scenario | None = None
        self.action_space: ActionSpace | None = None
        self._aircraft: list[AircraftState] = []
        self._targets: list[AircraftTarget] = []
        self._weights = RewardWeights()
        self._config = RewardConfig()
        self._step_count = 0
        self._done = True
        self._excursion_seen = False
        self._exit_success: list[bool] = []
        self._min_separation: float | None = None
        self._entry_fls: list[int] = []

    # -- lifecycle ---------------------------------------------------------

    def reset(self, scenario: Scenario, weights: RewardWeights, config: RewardConfig | None = None) -> np.ndarray:
        if scenario.kind == VERTICAL and self.action_space_kind != VERTICAL_SPACE:
            raise EnvError(f"scenario kind {scenario.kind!r} needs the vertical action space, not {self.action_space_kind!r}")
        if scenario.kind != VERTICAL and self.action_space_kind == VERTICAL_SPACE:
            raise EnvError(f"scenario kind {scenario.kind!r} cannot use the vertical action space")
        self.scenario = scenario
        self._config = config or RewardConfig()
        self._weights = weights
        # No damping penalty may precede the first action, so the clocks
        # start with a full decay window already elapsed.
        warm = self._config.damping_window_steps
        self._aircraft = [replace(s, steps_since_last_action=warm) for s, _ in scenario.aircraft]
        self._targets = [t for _, t in scenario.aircraft]
        self.action_space = ActionSpace(
            kind=self.action_space_kind, callsigns=tuple(s.callsign for s in self._aircraft)
        )
        self._step_count = 0
        self._done = False
        self._excursion_seen = False
        self._exit_success = [False] * len(self._aircraft)
        self._min_separation = None
        self._entry_fls = [round(s.altitude_ft / 100.0) for s, _ in scenario.aircraft]
        self._track_exit_and_bounds()
        return self.build_observation()

    @property
    def done(self) -> bool:
        return self._done

    @property
    def step_count(self) -> int:
        return self._step_count

    @property
    def aircraft(self) -> tuple[AircraftState, ...]:
        return tuple(self._aircraft)

    @property
    def targets(self) -> tuple[AircraftTarget, ...]:
        return tuple(self._targets)

    @property
    def reward_config(self) -> RewardConfig:
        return self._config

    @property
    def weights(self) -> RewardWeights:
        return self._weights

    def set_weights(self, weights: RewardWeights) -> None:
        """Swap reward weighting mid-run (curriculum phase change)."""
        self._weights = weights

    # -- actions -----------------------------------------------------------

    def decode_action(self, index: int) -> Command | None:
        if self.action_space is None:
            raise EnvError("environment has not been reset")
        return self.action_space.decode(index)

    def step(self, action_index: int) -> StepResult:
        command = self.decode_action(action_index)
        return self._advance(command=command, action_index=action_index, macro_targets=())

    def apply_frozen_primitive(self, command: Command) -> None:
        """Apply one primitive to cleared values only, with time held fixed.

        Used by the stacking loop between physics steps: positions,
        flown headings and altitudes are untouched; only the commanded
        values and the target's time-since-action clock change.
        """
        idx = self._index_of(command.target)
        state = self._aircraft[idx]
        if state.exited:
            raise EnvError(f"{command.target}: cannot stack onto an exited aircraft")
        if command.kind == "heading":
            state = replace(
                state,
                cleared_heading=(state.cleared_heading + command.delta) % 360.0,
                steps_since_last_action=0,
            )
        else:
            lo, hi = self.sector.vertical_bounds_fl
            state = replace(
                state,
                selected_fl=max(lo, min(hi, state.selected_fl + command.delta)),
                steps_since_last_action=0,
            )
        self._aircraft[idx] = state

    def advance_after_macros(self, macro_targets: Sequence[str]) -> StepResult:
        """Advance physics one step after stacked macros were applied.

        ``macro_targets`` holds one callsign per issued macro; each macro
        counts as a single instruction against its aircraft's budget and
        resets that aircraft's time-since-action clock once.
        """
        return self._advance(command=None, action_index=0, macro_targets=tuple(macro_targets))

    # -- core transition ---------------------------------------------------

    def _index_of(self, callsign: str) -> int:
        for i, state in enumerate(self._aircraft):
            if state.callsign == callsign:
                return i
        raise EnvError(f"unknown callsign {callsign!r}")

    def _advance(self, command: Command | None, action_index: int, macro_targets: tuple[str, ...]) -> StepResult:
        if self._done:
            raise EnvError("episode is done; reset before stepping")

        aircraft = [s.evolve(steps_since_last_action=s.steps_since_last_action + 1) for s in self._aircraft]

        command_ignored = False
        if command is not None:
            idx = self._index_of(command.target)
            if aircraft[idx].exited:
                command, command_ignored = None, True
            else:
                aircraft[idx] = apply_command(aircraft[idx], command, self.sector.vertical_bounds_fl)
        for callsign in macro_targets:
            idx = self._index_of(callsign)
            state = aircraft[idx]
            if not state.exited:
                aircraft[idx] = state.evolve(steps_since_last_action=0, action_count=state.action_count + 1)

        for i, state in enumerate(aircraft):
            if state.exited:
                continue
            if self.scenario.kind == VERTICAL:
                state = own_navigation(state)
            aircraft[i] = step_aircraft(state, SIM_STEP_SECONDS)

        self._aircraft = aircraft
        self._step_count += 1
        cross_tracks = self._track_exit_and_bounds()

        components, report = self._step_components(cross_tracks)
        reward = total_step_reward(components, self._weights)

        all_exited = all(s.exited for s in aircraft)
        self._done = self._step_count >= self.scenario.max_steps or all_exited

        terminal_bonus = 0.0
        summary = None
        if self._done:
            summary = self._episode_summary()
            terminal_bonus = self._weights.terminal * terminal_rewards(
                summary, self._weights.include_action_criterion
            )
            reward += terminal_bonus

        info = {
            "step": self._step_count,
            "action_index": action_index,
            "command": command,
            "command_ignored_exited": command_ignored,
            "macro_targets": macro_targets,
            "components": components.means(),
            "separation": report,
            "action_counts": tuple(s.action_count for s in aircraft),
            "exited": tuple(s.exited for s in aircraft),
            "terminal_bonus": terminal_bonus,
            "criteria": summary,
        }
        return StepResult(observation=self.build_observation(), reward=reward, done=self._done, info=info)

    def _track_exit_and_bounds(self) -> dict[int, float]:
        """Update exit/excursion accounting; returns non-exited cross-tracks."""
        lo_ft, hi_ft = self.sector.vertical_bounds_ft
        cross_tracks: dict[int, float] = {}
        for i, state in enumerate(self._aircraft):
            exit_fix = state.route.exit
            if math.hypot(state.east - exit_fix.east, state.north - exit_fix.north) <= self._config.exit_radius_nm:
                self._exit_success[i] = True
            if state.exited:
                continue
            off_track = cross_track_distance(state.position, state.route, state.active_leg)
            cross_tracks[i] = off_track
            if abs(off_track) > self.sector.airway_half_width_nm or not lo_ft <= state.altitude_ft <= hi_ft:
                self._excursion_seen = True
        if len(self._aircraft) == 2:
            a, b = self._aircraft
            if not a.exited and not b.exited:
                gap = separation(a, b)
                if self._min_separation is None or gap < self._min_separation:
                    self._min_separation = gap
        return cross_tracks

    def _step_components(self, cross_tracks: dict[int, float]) -> tuple[StepComponents, SeparationReport | None]:
        centre = []
        damp = []
        vert = []
        for i, (state, target) in enumerate(zip(self._aircraft, self._targets)):
            if state.exited:
                continue
            centre.append(centreline_reward(cross_tracks[i], self._config.centreline_scale_nm))
            damp.append(damping_reward(state.steps_since_last_action, self._config.damping_window_steps))
            vert.append(vertical_reward(state.selected_fl, target.exit_fl, self._config.vertical_scale_fl))

        report = None
        r_safety = 0.0
        if len(self._aircraft) == 2:
            a, b = self._aircraft
            if not a.exited and not b.exited:
                report = project_min_separation(
                    a, b, self._config.separation_full_scale_nm, self._config.project_cleared_heading
                )
                r_safety = safety_reward(report, self._config)
        return StepComponents(centreline=tuple(centre), damping=tuple(damp), vertical=tuple(vert), safety=r_safety), report

    def _episode_summary(self) -> EpisodeSummary:
        exited_ok = all(
            flag and state.selected_fl == target.exit_fl
            for flag, state, target in zip(self._exit_success, self._aircraft, self._targets)
        )
        actions_ok = all(s.action_count < self._config.action_budget for s in self._aircraft)
        return EpisodeSummary(
            exited_at_target=exited_ok,
            stayed_in_bounds=not self._excursion_seen,
            within_action_budget=actions_ok,
        )

    @property
    def min_separation_nm(self) -> float | None:
        return self._min_separation

    # -- observations ------------------------------------------------------

    def _turn_features(self, state: AircraftState) -> tuple[float, float]:
        try:
            to_next = relative_turn(state.cleared_heading, bearing_to(state.position, state.next_fix))
        except ValueError:
            to_next = 0.0
        subsequent = state.route.fixes[min(state.next_fix_index + 1, len(state.route.fixes) - 1)]
        try:
            to_subsequent = relative_turn(state.cleared_heading, bearing_to(state.position, subsequent))
        except ValueError:
            to_subsequent = 0.0
        return to_next, to_subsequent

    def build_observation(self) -> np.ndarray:
        if self.scenario is None:
            raise EnvError("environment has not been reset")
        kind = self.scenario.kind
        values: list[float] = []
        if kind in (LATERAL_NAV, LATERAL_AVOIDANCE):
            for state in self._aircraft:
                to_next, to_subsequent = self._turn_features(state)
                values.append(_norm(to_next, TURN_RANGE))
                values.append(_norm(to_subsequent, TURN_RANGE))
                values.append(_norm(cross_track_distance(state.position, state.route, state.active_leg), XTRACK_RANGE))
                values.append(_norm(state.steps_since_last_action * SIM_STEP_SECONDS, self.lateral_time_range))
            if kind == LATERAL_AVOIDANCE:
                a, b = self._aircraft
                if a.position == b.position:
                    turn_between = 0.0
                else:
                    turn_between = relative_bearing(a, b)
                values.append(_norm(turn_between, TURN_RANGE))
                values.append(_norm(separation(a, b), PAIR_DISTANCE_RANGE))
        else:
            state = self._aircraft[0]
            target = self._targets[0]
            exit_fix = state.route.exit
            dist_to_exit = ((state.east - exit_fix.east) ** 2 + (state.north - exit_fix.north) ** 2) ** 0.5
            level_gap_ft = abs(state.altitude_ft - target.exit_fl * 100.0)
            minutes_needed = level_gap_ft / state.performance.vertical_rate_fpm
            lead_nm = dist_to_exit - minutes_needed * state.performance.ground_speed_kt / 60.0
            values.append(_norm(lead_nm, LEVEL_LEAD_RANGE))
            values.append(_norm(state.selected_fl - target.exit_fl, LEVEL_DIFF_RANGE))
            values.append(_norm(self._entry_fls[0] - target.exit_fl, LEVEL_DIFF_RANGE))
            values.append(_norm(state.steps_since_last_action * SIM_STEP_SECONDS, self.vertical_time_range))
        return np.asarray(values, dtype=np.float64)

    # -- persistence -------------------------------------------------------

    def snapshot(self) -> dict:
        """Serializable mid-episode state sufficient to replay the remainder."""
        if self.scenario is None:
            raise EnvError("environment has not been reset")
        from dataclasses import asdict

        return {
            "format_version": ENV_STATE_FORMAT_VERSION,
            "scenario_kind": self.scenario.kind,
            "scenario_seed": self.scenario.seed,
            "max_steps": self.scenario.max_steps,
            "action_space_kind": self.action_space_kind,
            "weights": asdict(self._weights),
            "config": asdict(self._config),
            "step_count": self._step_count,
            "done": self._done,
            "excursion_seen": self._excursion_seen,
            "exit_success": list(self._exit_success),
            "min_separation": self._min_separation,
            "entry_fls": list(self._entry_fls),
            "aircraft": [_aircraft_to_doc(s, t) for s, t in zip(self._aircraft, self._targets)],
        }

    def restore(self, snapshot: dict) -> np.ndarray:
        if snapshot.get("format_version") != ENV_STATE_FORMAT_VERSION:
            raise EnvError(f"unsupported env state format_version: {snapshot.get('format_version')!r}")
        if snapshot["action_space_kind"] != self.action_space_kind:
            raise EnvError(
                f"snapshot action space {snapshot['action_space_kind']!r} does not match env {self.action_space_kind!r}"
            )
        pairs = [_aircraft_from_doc(doc, self.sector) for doc in snapshot["aircraft"]]
        self.scenario = Scenario(
            kind=snapshot["scenario_kind"],
            aircraft=tuple(pairs),
            seed=int(snapshot["scenario_seed"]),
            max_steps=int(snapshot["max_steps"]),
        )
        self._weights = RewardWeights(**snapshot["weights"])
        self._config = RewardConfig(**snapshot["config"])
        self._aircraft = [s for s, _ in pairs]
        self._targets = [t for _, t in pairs]
        self.action_space = ActionSpace(
            kind=self.action_space_kind, callsigns=tuple(s.callsign for s in self._aircraft)
        )
        self._step_count = int(snapshot["step_count"])
        self._done = bool(snapshot["done"])
        self._excursion_seen = bool(snapshot["excursion_seen"])
        self._exit_success = [bool(v) for v in snapshot["exit_success"]]
        self._min_separation = snapshot["min_separation"]
        self._entry_fls = [int(v) for v in snapshot["entry_fls"]]
        return self.build_observation()
