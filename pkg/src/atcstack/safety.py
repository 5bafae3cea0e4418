"""Pairwise separation measurement and constant-velocity forward projection.

The projected minimum separation is the closed-form closest point of
approach of two uniform motions, clamped to a horizon chosen so each
aircraft covers at most the configured path length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .airspace import bearing_between, relative_turn
from .dynamics import AircraftState


@dataclass(frozen=True)
class SeparationReport:
    """Current and projected-minimum lateral separation between two aircraft."""

    current_nm: float
    projected_min_nm: float
    time_of_closest_approach_s: float


def separation(a: AircraftState, b: AircraftState) -> float:
    """Planar Euclidean distance between two aircraft, in nautical miles."""
    return math.hypot(a.east - b.east, a.north - b.north)


def _velocity_nm_s(state: AircraftState, use_cleared_heading: bool) -> tuple[float, float]:
    heading = state.cleared_heading if use_cleared_heading else state.heading
    rad = math.radians(heading)
    speed = state.performance.ground_speed_nm_s
    return (speed * math.sin(rad), speed * math.cos(rad))


def project_min_separation(
    a: AircraftState,
    b: AircraftState,
    d_max_nm: float,
    use_cleared_heading: bool = False,
) -> SeparationReport:
    """Dead-reckon both aircraft and report the closest point of approach.

    Both aircraft are extrapolated at constant ground speed along their
    *current* heading by default (the fail-safe reading: pending turns are
    ignored); set ``use_cleared_heading`` to project the commanded track
    instead.  The horizon is ``d_max / max(ground speeds)`` so neither
    trajectory is extended beyond a path length of d_max.
    """
    if d_max_nm <= 0:
        raise ValueError("d_max_nm must be positive")
    va = _velocity_nm_s(a, use_cleared_heading)
    vb = _velocity_nm_s(b, use_cleared_heading)
    re = b.east - a.east
    rn = b.north - a.north
    ve = vb[0] - va[0]
    vn = vb[1] - va[1]

    horizon = d_max_nm / max(a.performance.ground_speed_nm_s, b.performance.ground_speed_nm_s)
    vv = ve * ve + vn * vn
    if vv > 0.0:
        t_star = -(re * ve + rn * vn) / vv
    else:
        t_star = 0.0
    t_star = max(0.0, min(horizon, t_star))

    d_min = math.hypot(re + ve * t_star, rn + vn * t_star)
    return SeparationReport(
        current_nm=math.hypot(re, rn),
        projected_min_nm=d_min,
        time_of_closest_approach_s=t_star,
    )


def relative_bearing(a: AircraftState, b: AircraftState) -> float:
    """Signed turn from aircraft a's cleared heading to the bearing of b.

    Not antisymmetric in general: it depends on a's cleared heading only.
    """
    if a.east == b.east and a.north == b.north:
        raise ValueError("relative bearing undefined for coincident aircraft")
    return relative_turn(a.cleared_heading, bearing_between(a.position, b.position))
