"""Stochastic scenario generation with seeded, portable reproducibility.

Randomness comes from numpy's Philox counter-based generator keyed on the
scenario seed, so a (sector, seed) pair replays identically across runs
and platforms.  Lateral scenarios are rejected and redrawn until the two
aircraft start at distinct entry fixes with at least 20 nm between them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .airspace import Route, Sector, bearing_to
from .dynamics import AircraftState, Performance

SCENARIO_FORMAT_VERSION = 1

LATERAL_NAV = "lateral_nav"
LATERAL_AVOIDANCE = "lateral_avoidance"
VERTICAL = "vertical"
SCENARIO_KINDS = (LATERAL_NAV, LATERAL_AVOIDANCE, VERTICAL)

START_DISC_RADIUS_NM = 4.0
MIN_INITIAL_SEPARATION_NM = 20.0
MAX_REJECTIONS = 100

LATERAL_FL = 300
VERTICAL_FL_CHOICES = tuple(range(100, 301, 10))

DEFAULT_MAX_STEPS = 300


class ScenarioError(ValueError):
    """Raised when generation cannot satisfy the scenario constraints."""


@dataclass(frozen=True)
class AircraftTarget:
    """Where an aircraft must leave the sector, and at what level."""

    exit_fix: str
    exit_fl: int


@dataclass(frozen=True)
class Scenario:
    kind: str
    aircraft: tuple[tuple[AircraftState, AircraftTarget], ...]
    seed: int
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if self.max_steps <= 0:
            raise ScenarioError("max_steps must be positive")
        expected = 1 if self.kind == VERTICAL else 2
        if len(self.aircraft) != expected:
            raise ScenarioError(f"{self.kind} scenarios need {expected} aircraft, got {len(self.aircraft)}")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _draw_route(rng: np.random.Generator, routes: list[Route]) -> Route:
    return routes[int(rng.integers(len(routes)))]


def _draw_start_position(rng: np.random.Generator, route: Route) -> tuple[float, float]:
    # Uniform over the disc around the first route fix.
    radius = START_DISC_RADIUS_NM * math.sqrt(float(rng.random()))
    angle = 2.0 * math.pi * float(rng.random())
    origin = route.entry
    return (origin.east + radius * math.sin(angle), origin.north + radius * math.cos(angle))


def _lateral_aircraft(rng: np.random.Generator, routes: list[Route], callsign: str, performance: Performance) -> tuple[AircraftState, AircraftTarget]:
    route = _draw_route(rng, routes)
    position = _draw_start_position(rng, route)
    heading = bearing_to(route.entry.position, route.fixes[1])
    state = AircraftState(
        callsign=callsign,
        east=position[0],
        north=position[1],
        heading=heading,
        cleared_heading=heading,
        altitude_ft=LATERAL_FL * 100.0,
        selected_fl=LATERAL_FL,
        route=route,
        next_fix_index=1,
        performance=performance,
    )
    return state, AircraftTarget(exit_fix=route.exit.name, exit_fl=LATERAL_FL)


def generate_lateral(
    sector: Sector,
    seed: int,
    kind: str = LATERAL_NAV,
    max_steps: int = DEFAULT_MAX_STEPS,
    performance: Performance | None = None,
) -> Scenario:
    """Two aircraft on random routes, deconflicted at scenario start."""
    if kind not in (LATERAL_NAV, LATERAL_AVOIDANCE):
        raise ScenarioError(f"generate_lateral cannot build kind {kind!r}")
    routes = sector.route_list()
    if len({r.entry.name for r in routes}) < 2:
        raise ScenarioError("sector needs routes from at least two entry fixes")
    perf = performance or Performance()

    rng = _rng(seed)
    for _ in range(MAX_REJECTIONS):
        first = _lateral_aircraft(rng, routes, "AC1", perf)
        second = _lateral_aircraft(rng, routes, "AC2", perf)
        distinct = first[0].route.entry.name != second[0].route.entry.name
        gap = math.hypot(first[0].east - second[0].east, first[0].north - second[0].north)
        if distinct and gap >= MIN_INITIAL_SEPARATION_NM:
            return Scenario(kind=kind, aircraft=(first, second), seed=seed, max_steps=max_steps)
    raise ScenarioError(
        f"could not deconflict start positions after {MAX_REJECTIONS} draws; sector too small"
    )


def generate_vertical(
    sector: Sector,
    seed: int,
    max_steps: int = DEFAULT_MAX_STEPS,
    performance: Performance | None = None,
) -> Scenario:
    """One aircraft at its first route fix with random initial and target levels."""
    routes = sector.route_list()
    perf = performance or Performance()
    rng = _rng(seed)

    route = _draw_route(rng, routes)
    initial_fl = int(rng.choice(VERTICAL_FL_CHOICES))
    target_fl = int(rng.choice(VERTICAL_FL_CHOICES))
    heading = bearing_to(route.entry.position, route.fixes[1])
    state = AircraftState(
        callsign="AC1",
        east=route.entry.east,
        north=route.entry.north,
        heading=heading,
        cleared_heading=heading,
        altitude_ft=initial_fl * 100.0,
        selected_fl=initial_fl,
        route=route,
        next_fix_index=1,
        performance=perf,
    )
    target = AircraftTarget(exit_fix=route.exit.name, exit_fl=target_fl)
    return Scenario(kind=VERTICAL, aircraft=((state, target),), seed=seed, max_steps=max_steps)


def generate(sector: Sector, seed: int, kind: str, max_steps: int = DEFAULT_MAX_STEPS) -> Scenario:
    if kind == VERTICAL:
        return generate_vertical(sector, seed, max_steps=max_steps)
    return generate_lateral(sector, seed, kind=kind, max_steps=max_steps)


def _aircraft_to_doc(state: AircraftState, target: AircraftTarget) -> dict:
    return {
        "callsign": state.callsign,
        "east_nm": state.east,
        "north_nm": state.north,
        "heading_deg": state.heading,
        "cleared_heading_deg": state.cleared_heading,
        "altitude_ft": state.altitude_ft,
        "selected_fl": state.selected_fl,
        "route_id": state.route.id,
        "next_fix_index": state.next_fix_index,
        "steps_since_last_action": state.steps_since_last_action,
        "action_count": state.action_count,
        "exited": state.exited,
        "performance": {
            "ground_speed_kt": state.performance.ground_speed_kt,
            "turn_rate_deg_s": state.performance.turn_rate_deg_s,
            "vertical_rate_fpm": state.performance.vertical_rate_fpm,
        },
        "target": {"exit_fix": target.exit_fix, "exit_fl": target.exit_fl},
    }


def _aircraft_from_doc(doc: dict, sector: Sector) -> tuple[AircraftState, AircraftTarget]:
    route = sector.routes.get(doc["route_id"])
    if route is None:
        raise ScenarioError(f"scenario references unknown route {doc['route_id']!r}")
    perf_doc = doc.get("performance", {})
    state = AircraftState(
        callsign=doc["callsign"],
        east=float(doc["east_nm"]),
        north=float(doc["north_nm"]),
        heading=float(doc["heading_deg"]),
        cleared_heading=float(doc["cleared_heading_deg"]),
        altitude_ft=float(doc["altitude_ft"]),
        selected_fl=int(doc["selected_fl"]),
        route=route,
        next_fix_index=int(doc["next_fix_index"]),
        performance=Performance(
            ground_speed_kt=float(perf_doc.get("ground_speed_kt", 450.0)),
            turn_rate_deg_s=float(perf_doc.get("turn_rate_deg_s", 1.5)),
            vertical_rate_fpm=float(perf_doc.get("vertical_rate_fpm", 2000.0)),
        ),
        steps_since_last_action=int(doc.get("steps_since_last_action", 0)),
        action_count=int(doc.get("action_count", 0)),
        exited=bool(doc.get("exited", False)),
    )
    target = AircraftTarget(exit_fix=doc["target"]["exit_fix"], exit_fl=int(doc["target"]["exit_fl"]))
    return state, target


def scenario_to_document(scenario: Scenario) -> dict:
    """Serialize a scenario to a JSON-ready document for regression pinning."""
    return {
        "format_version": SCENARIO_FORMAT_VERSION,
        "kind": scenario.kind,
        "seed": scenario.seed,
        "max_steps": scenario.max_steps,
        "aircraft": [_aircraft_to_doc(s, t) for s, t in scenario.aircraft],
    }


def scenario_from_document(document: dict, sector: Sector) -> Scenario:
    version = document.get("format_version")
    if version != SCENARIO_FORMAT_VERSION:
        raise ScenarioError(f"unsupported scenario format_version: {version!r}")
    aircraft = tuple(_aircraft_from_doc(d, sector) for d in document["aircraft"])
    return Scenario(
        kind=document["kind"],
        aircraft=aircraft,
        seed=int(document["seed"]),
        max_steps=int(document.get("max_steps", DEFAULT_MAX_STEPS)),
    )


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_document(scenario), indent=2) + "\n")


def load_scenario(path: str | Path, sector: Sector) -> Scenario:
    document = json.loads(Path(path).read_text())
    return scenario_from_document(document, sector)
