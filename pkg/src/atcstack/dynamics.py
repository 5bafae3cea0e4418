"""Point-mass aircraft kinematics advanced in fixed six-second steps.

Aircraft fly toward a *cleared heading* (turning at a fixed rate) and a
*selected flight level* (climbing or descending at a fixed vertical rate).
This is the documented stand-in for a full performance model: speeds and
rates are configurable per aircraft and default to a mid-size jet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .airspace import Route, advance_waypoint, bearing_to, exit_fix_reached, relative_turn

SIM_STEP_SECONDS = 6.0

DEFAULT_GROUND_SPEED_KT = 450.0
DEFAULT_TURN_RATE_DEG_S = 1.5
DEFAULT_VERTICAL_RATE_FPM = 2000.0


class CommandError(ValueError):
    """Raised for malformed or inapplicable clearances."""


@dataclass(frozen=True)
class Performance:
    """Aircraft performance numbers used by the kinematic step."""

    ground_speed_kt: float = DEFAULT_GROUND_SPEED_KT
    turn_rate_deg_s: float = DEFAULT_TURN_RATE_DEG_S
    vertical_rate_fpm: float = DEFAULT_VERTICAL_RATE_FPM

    def __post_init__(self) -> None:
        if min(self.ground_speed_kt, self.turn_rate_deg_s, self.vertical_rate_fpm) <= 0:
            raise ValueError("performance values must be strictly positive")

    @property
    def ground_speed_nm_s(self) -> float:
        return self.ground_speed_kt / 3600.0


@dataclass(frozen=True)
class Command:
    """A single clearance: a signed heading or flight-level change."""

    target: str
    kind: str  # "heading" | "level"
    delta: int  # signed, non-zero multiple of 10 (degrees or flight levels)

    def __post_init__(self) -> None:
        if self.kind not in ("heading", "level"):
            raise CommandError(f"unknown command kind {self.kind!r}")
        if self.delta == 0 or self.delta % 10 != 0:
            raise CommandError(f"command delta must be a non-zero multiple of 10, got {self.delta}")


@dataclass(frozen=True)
class AircraftState:
    """Kinematic state plus command state for one aircraft.

    ``steps_since_last_action`` counts environment steps since the last
    clearance applied to this aircraft; it drives both the action-damping
    reward and the time-since-action observation feature.
    """

    callsign: str
    east: float
    north: float
    heading: float
    cleared_heading: float
    altitude_ft: float
    selected_fl: int
    route: Route
    next_fix_index: int = 1
    performance: Performance = field(default_factory=Performance)
    steps_since_last_action: int = 0
    action_count: int = 0
    exited: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", self.heading % 360.0)
        object.__setattr__(self, "cleared_heading", self.cleared_heading % 360.0)
        if not 0 <= self.next_fix_index < len(self.route.fixes):
            raise ValueError(f"{self.callsign}: next_fix_index {self.next_fix_index} invalid")
        if self.steps_since_last_action < 0 or self.action_count < 0:
            raise ValueError(f"{self.callsign}: negative action counters")

    @property
    def position(self) -> tuple[float, float]:
        return (self.east, self.north)

    @property
    def next_fix(self):
        return self.route.fixes[self.next_fix_index]

    @property
    def active_leg(self) -> int:
        # Leg flown toward the next fix; saturates on the final leg.
        return min(max(self.next_fix_index - 1, 0), self.route.num_legs - 1)

    def evolve(self, **changes) -> "AircraftState":
        """Copy with field changes, skipping re-validation (hot path).

        Callers must keep the invariants themselves (angles normalized,
        indices in range); use ``dataclasses.replace`` when unsure.
        """
        new = object.__new__(AircraftState)
        for name in _STATE_FIELDS:
            object.__setattr__(new, name, changes.get(name, getattr(self, name)))
        return new


_STATE_FIELDS = tuple(AircraftState.__dataclass_fields__)


def apply_command(state: AircraftState, command: Command, vertical_bounds_fl: tuple[int, int] = (50, 450)) -> AircraftState:
    """Apply a clearance: update the cleared heading or selected level.

    Level changes clamp at the sector's vertical bounds so a policy action
    is always executable.  Resets the aircraft's time-since-action clock.
    """
    if state.exited:
        raise CommandError(f"{state.callsign}: cannot command an exited aircraft")
    if command.target != state.callsign:
        raise CommandError(f"command targets {command.target!r}, aircraft is {state.callsign!r}")
    if command.kind == "heading":
        cleared = (state.cleared_heading + command.delta) % 360.0
        selected = state.selected_fl
    else:
        lo, hi = vertical_bounds_fl
        selected = max(lo, min(hi, state.selected_fl + command.delta))
        cleared = state.cleared_heading
    return state.evolve(
        cleared_heading=cleared,
        selected_fl=selected,
        steps_since_last_action=0,
        action_count=state.action_count + 1,
    )


def step_aircraft(state: AircraftState, dt: float = SIM_STEP_SECONDS) -> AircraftState:
    """Advance one fixed time step toward the cleared heading and selected level.

    The heading turns along the shortest angular path and captures exactly
    when within one step of turn authority; displacement is laid along the
    mean of the start and end headings, so its magnitude is always
    ground_speed * dt.  Altitude captures the selected level exactly,
    never overshooting.
    """
    if state.exited:
        return state

    perf = state.performance
    turn_needed = relative_turn(state.heading, state.cleared_heading)
    max_turn = perf.turn_rate_deg_s * dt
    if abs(turn_needed) <= max_turn:
        applied = turn_needed
        heading = state.cleared_heading
    else:
        applied = math.copysign(max_turn, turn_needed)
        heading = (state.heading + applied) % 360.0

    mean_heading = math.radians(state.heading + applied / 2.0)
    dist = perf.ground_speed_nm_s * dt
    east = state.east + dist * math.sin(mean_heading)
    north = state.north + dist * math.cos(mean_heading)

    target_ft = state.selected_fl * 100.0
    climb = perf.vertical_rate_fpm / 60.0 * dt
    if abs(target_ft - state.altitude_ft) <= climb:
        altitude = target_ft
    else:
        altitude = state.altitude_ft + math.copysign(climb, target_ft - state.altitude_ft)

    next_index = advance_waypoint((east, north), state.route, state.next_fix_index)
    exited = next_index == len(state.route.fixes) - 1 and exit_fix_reached((east, north), state.route)

    return state.evolve(
        east=east,
        north=north,
        heading=heading,
        altitude_ft=altitude,
        next_fix_index=next_index,
        exited=exited,
    )


def own_navigation(state: AircraftState) -> AircraftState:
    """Point the cleared heading at the next route fix (pilot's own navigation)."""
    if state.exited:
        return state
    try:
        cleared = bearing_to(state.position, state.next_fix)
    except ValueError:
        return state  # sitting exactly on the fix; keep the current clearance
    return state.evolve(cleared_heading=cleared)
