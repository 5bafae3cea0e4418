"""Sector geometry: fixes, routes, airway corridors, and navigation math.

All geometry is a flat Euclidean plane in nautical miles with coordinates
(east, north) relative to the sector centre.  Headings and bearings are
compass degrees: 0 = north, clockwise positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

SECTOR_FORMAT_VERSION = 1

# A fix counts as reached when the aircraft is inside this radius, or has
# passed abeam it (projection beyond the leg end).  Prevents waypoint lock
# when an avoidance vector skirts a fix.
FIX_CAPTURE_RADIUS_NM = 2.0

# Cross-track distances are clipped to this symmetric bound before use in
# observations; anything beyond it is a gross excursion.
CROSS_TRACK_CLIP_NM = 100.0


class SectorError(ValueError):
    """Raised when a sector document fails to parse or violates an invariant."""


@dataclass(frozen=True)
class Fix:
    """A named navigation point at (east, north) nautical miles."""

    name: str
    east: float
    north: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.east, self.north)


@dataclass(frozen=True)
class Route:
    """An ordered sequence of at least three fixes (entry, via, exit)."""

    id: str
    fixes: tuple[Fix, ...]

    def __post_init__(self) -> None:
        if len(self.fixes) < 3:
            raise SectorError(f"route {self.id!r}: needs >=3 fixes, got {len(self.fixes)}")
        for a, b in zip(self.fixes, self.fixes[1:]):
            if a.name == b.name or leg_length(a, b) <= 0.0:
                raise SectorError(f"route {self.id!r}: zero-length leg {a.name}->{b.name}")

    @property
    def entry(self) -> Fix:
        return self.fixes[0]

    @property
    def exit(self) -> Fix:
        return self.fixes[-1]

    @property
    def num_legs(self) -> int:
        return len(self.fixes) - 1

    def leg(self, index: int) -> tuple[Fix, Fix]:
        return self.fixes[index], self.fixes[index + 1]


@dataclass(frozen=True)
class Sector:
    """Airspace geometry: fix set, route set, bounds and corridor width."""

    fixes: dict[str, Fix]
    routes: dict[str, Route]
    bounding_box_nm: float = 120.0
    airway_half_width_nm: float = 10.0
    vertical_bounds_fl: tuple[int, int] = (50, 450)
    entry_fix_names: frozenset[str] = field(default_factory=frozenset)
    name: str = "default"

    def __post_init__(self) -> None:
        if self.bounding_box_nm <= 0:
            raise SectorError("bounding_box_nm must be positive")
        if self.airway_half_width_nm <= 0:
            raise SectorError("airway_half_width_nm must be positive")
        lo, hi = self.vertical_bounds_fl
        if lo >= hi:
            raise SectorError(f"vertical bounds inverted: FL{lo:03d}..FL{hi:03d}")
        half = self.bounding_box_nm / 2.0
        for fix in self.fixes.values():
            if abs(fix.east) > half or abs(fix.north) > half:
                raise SectorError(f"fix {fix.name!r} lies outside the {self.bounding_box_nm} nm box")
        for route in self.routes.values():
            for fix in route.fixes:
                if self.fixes.get(fix.name) is not fix:
                    raise SectorError(f"route {route.id!r} references unknown fix {fix.name!r}")
        # Entry fixes act as seed points and must sit on the sector periphery,
        # taken as the outer half of the box (radius >= side/4).
        for name in self.entry_fix_names:
            fix = self.fixes.get(name)
            if fix is None:
                raise SectorError(f"entry fix {name!r} is not in the fix set")
            if math.hypot(fix.east, fix.north) < self.bounding_box_nm / 4.0:
                raise SectorError(f"entry fix {name!r} does not lie on the periphery")

    @property
    def entry_fixes(self) -> list[Fix]:
        return sorted((self.fixes[n] for n in self.entry_fix_names), key=lambda f: f.name)

    @property
    def vertical_bounds_ft(self) -> tuple[float, float]:
        lo, hi = self.vertical_bounds_fl
        return (lo * 100.0, hi * 100.0)

    def route_list(self) -> list[Route]:
        return [self.routes[k] for k in sorted(self.routes)]


def leg_length(a: Fix, b: Fix) -> float:
    return math.hypot(b.east - a.east, b.north - a.north)


def bearing_between(origin: tuple[float, float], target: tuple[float, float]) -> float:
    """Compass bearing from one point to another, in [0, 360)."""
    de = target[0] - origin[0]
    dn = target[1] - origin[1]
    if de == 0.0 and dn == 0.0:
        raise ValueError("bearing undefined for coincident points")
    return math.degrees(math.atan2(de, dn)) % 360.0


def bearing_to(position: tuple[float, float], fix: Fix) -> float:
    """Compass bearing from ``position`` to ``fix`` (0 = north, clockwise)."""
    return bearing_between(position, fix.position)


def relative_turn(cleared_heading: float, target_bearing: float) -> float:
    """Smallest signed turn from a cleared heading to a bearing, in [-180, 180].

    The 180-degree tie is broken toward +180 (a right turn).
    """
    diff = (target_bearing - cleared_heading) % 360.0
    if diff > 180.0:
        diff -= 360.0
    return diff


def cross_track_distance(position: tuple[float, float], route: Route, active_leg: int) -> float:
    """Signed perpendicular distance from the active leg's infinite line.

    Positive to the right of the track direction; clipped to +/-100 nm.
    """
    if not 0 <= active_leg < route.num_legs:
        raise IndexError(f"leg {active_leg} out of range for route {route.id!r}")
    a, b = route.leg(active_leg)
    ue = (b.east - a.east) / leg_length(a, b)
    un = (b.north - a.north) / leg_length(a, b)
    pe = position[0] - a.east
    pn = position[1] - a.north
    signed = pe * un - pn * ue
    return max(-CROSS_TRACK_CLIP_NM, min(CROSS_TRACK_CLIP_NM, signed))


def _fix_reached(position: tuple[float, float], route: Route, index: int) -> bool:
    """True when the indexed fix is captured or passed abeam on its inbound leg."""
    fix = route.fixes[index]
    if math.hypot(position[0] - fix.east, position[1] - fix.north) <= FIX_CAPTURE_RADIUS_NM:
        return True
    if index == 0:
        return False
    a, b = route.fixes[index - 1], route.fixes[index]
    length = leg_length(a, b)
    along = ((position[0] - a.east) * (b.east - a.east) + (position[1] - a.north) * (b.north - a.north)) / length
    return along >= length


def advance_waypoint(position: tuple[float, float], route: Route, current_index: int) -> int:
    """Advance the next-fix index past any reached fixes; saturates at the exit fix."""
    if not 0 <= current_index < len(route.fixes):
        raise IndexError(f"fix index {current_index} out of range for route {route.id!r}")
    index = current_index
    while index < len(route.fixes) - 1 and _fix_reached(position, route, index):
        index += 1
    return index


def exit_fix_reached(position: tuple[float, float], route: Route) -> bool:
    """True when the route's final fix has been captured or passed abeam."""
    return _fix_reached(position, route, len(route.fixes) - 1)


def viable_routes(sector: Sector, entry: Fix | str) -> list[Route]:
    """All sector routes that start at the given entry (seed) fix."""
    name = entry if isinstance(entry, str) else entry.name
    if name not in sector.entry_fix_names:
        raise SectorError(f"fix {name!r} is not an entry seed point")
    return [r for r in sector.route_list() if r.entry.name == name]


def _parse_document(document: dict) -> Sector:
    version = document.get("format_version")
    if version != SECTOR_FORMAT_VERSION:
        raise SectorError(f"unsupported sector format_version: {version!r}")
    fixes: dict[str, Fix] = {}
    for entry in document.get("fixes", []):
        try:
            fix = Fix(name=str(entry["name"]), east=float(entry["east_nm"]), north=float(entry["north_nm"]))
        except (KeyError, TypeError) as exc:
            raise SectorError(f"malformed fix entry {entry!r}: {exc}") from exc
        if fix.name in fixes:
            raise SectorError(f"duplicate fix name {fix.name!r}")
        fixes[fix.name] = fix

    routes: dict[str, Route] = {}
    for entry in document.get("routes", []):
        try:
            route_id = str(entry["id"])
            names = [str(n) for n in entry["fixes"]]
        except (KeyError, TypeError) as exc:
            raise SectorError(f"malformed route entry {entry!r}: {exc}") from exc
        if route_id in routes:
            raise SectorError(f"duplicate route id {route_id!r}")
        missing = [n for n in names if n not in fixes]
        if missing:
            raise SectorError(f"route {route_id!r} references unknown fix {missing[0]!r}")
        routes[route_id] = Route(id=route_id, fixes=tuple(fixes[n] for n in names))

    return Sector(
        fixes=fixes,
        routes=routes,
        bounding_box_nm=float(document.get("bounding_box_nm", 120.0)),
        airway_half_width_nm=float(document.get("airway_half_width_nm", 10.0)),
        vertical_bounds_fl=tuple(int(v) for v in document.get("vertical_bounds_fl", (50, 450))),
        entry_fix_names=frozenset(str(n) for n in document.get("entry_fixes", [])),
        name=str(document.get("name", "unnamed")),
    )


def load_sector(path: str | Path | None = None) -> Sector:
    """Load a sector from a JSON document; with no path, load the bundled default."""
    if path is None:
        text = resources.files("atcstack.data").joinpath("default_sector.json").read_text()
    else:
        path = Path(path)
        if not path.exists():
            raise SectorError(f"sector file not found: {path}")
        text = path.read_text()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SectorError(f"sector document is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SectorError("sector document must be a JSON object")
    return _parse_document(document)
