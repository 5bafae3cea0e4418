"""Shaped step rewards, terminal bonuses, and the named weighting presets.

Every step component lies in [-1, 0]; the weighted sum is what the agent
maximises.  Terminal bonuses reward exits at the coordinated level, staying
inside the corridor and bounds, and issuing fewer than the action budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .safety import SeparationReport


@dataclass(frozen=True)
class RewardConfig:
    """Scaling constants shared by the reward components and episode scoring."""

    centreline_scale_nm: float = 6.0     # gradual penalty width around the route centreline
    damping_window_steps: int = 10       # steps over which the post-action penalty decays
    separation_full_scale_nm: float = 150.0  # pair distance beyond which safety reward is zero
    separation_profile_nm: float = 5.0   # width of the projected-separation penalty well
    vertical_scale_fl: float = 40.0      # flight-level scale of the vertical shaping
    action_budget: int = 30              # per-aircraft instruction budget for the terminal set
    exit_radius_nm: float = 5.0          # passing this close to the exit fix counts as exiting
    project_cleared_heading: bool = False  # forward-project commanded instead of flown heading

    def __post_init__(self) -> None:
        numeric = (
            self.centreline_scale_nm,
            self.damping_window_steps,
            self.separation_full_scale_nm,
            self.separation_profile_nm,
            self.vertical_scale_fl,
            self.action_budget,
            self.exit_radius_nm,
        )
        if min(numeric) <= 0:
            raise ValueError("all reward constants must be positive")


@dataclass(frozen=True)
class RewardWeights:
    """Weighted-sum coefficients for the step components and terminal set."""

    centreline: float = 0.0
    damping: float = 0.0
    safety: float = 0.0
    vertical: float = 0.0
    terminal: float = 1.0
    include_action_criterion: bool = True

    def __post_init__(self) -> None:
        if min(self.centreline, self.damping, self.safety, self.vertical, self.terminal) < 0:
            raise ValueError("reward weights must be non-negative")


# The four named weighting configurations.  The undamped preset drops the
# action criterion from the terminal set because nothing discourages acting.
PRESETS: dict[str, RewardWeights] = {
    "lateral_navigation_without_damping": RewardWeights(
        centreline=1.0, terminal=1.0, include_action_criterion=False
    ),
    "lateral_navigation": RewardWeights(centreline=1.0, damping=0.25, terminal=1.0),
    "vertical_navigation": RewardWeights(damping=0.5, vertical=1.0, terminal=1.0),
    "lateral_navigation_and_avoidance": RewardWeights(
        centreline=1.0, damping=0.3, safety=2.0, terminal=1.0
    ),
}


def preset_weights(name: str) -> RewardWeights:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown reward preset {name!r}; expected one of {sorted(PRESETS)}"
        ) from None


def centreline_reward(cross_track_nm: float, scale_nm: float) -> float:
    """Penalty for distance off the route centreline; 0 on track, -> -1 far off."""
    if scale_nm <= 0:
        raise ValueError("centreline scale must be positive")
    return math.exp(-((cross_track_nm / scale_nm) ** 2)) - 1.0


def damping_reward(steps_since_action: int, window_steps: int) -> float:
    """Linearly decaying penalty after each action; zero once the window elapses."""
    if steps_since_action < 0:
        raise ValueError("steps_since_action must be >= 0")
    if steps_since_action < window_steps:
        return steps_since_action / window_steps - 1.0
    return 0.0


def safety_reward(report: SeparationReport, config: RewardConfig) -> float:
    """Penalty for projected loss of separation, scaled up as the pair closes."""
    d12 = report.current_nm
    if d12 >= config.separation_full_scale_nm:
        return 0.0
    proximity = d12 / config.separation_full_scale_nm - 1.0
    return proximity * math.exp(-((report.projected_min_nm / config.separation_profile_nm) ** 2))


def vertical_reward(selected_fl: int, exit_fl: int, scale_fl: float) -> float:
    """Penalty for the gap between the selected and coordinated exit level."""
    if scale_fl <= 0:
        raise ValueError("vertical scale must be positive")
    return math.exp(-abs(selected_fl - exit_fl) / scale_fl) - 1.0


@dataclass(frozen=True)
class EpisodeSummary:
    """End-of-episode outcomes scored by the terminal reward set."""

    exited_at_target: bool       # every aircraft left at its exit fix at the exit level
    stayed_in_bounds: bool       # no corridor or vertical-bound excursion at any step
    within_action_budget: bool   # every aircraft issued fewer instructions than the budget


def terminal_rewards(summary: EpisodeSummary, include_action_criterion: bool = True) -> float:
    """Flat bonus of 5 per satisfied criterion, plus 20 when all are satisfied."""
    criteria = [summary.exited_at_target, summary.stayed_in_bounds]
    if include_action_criterion:
        criteria.append(summary.within_action_budget)
    bonus = 5.0 * sum(criteria)
    if all(criteria):
        bonus += 20.0
    return bonus


@dataclass(frozen=True)
class StepComponents:
    """Per-step reward components before weighting.

    Per-aircraft components carry one entry per non-exited aircraft and are
    averaged before weighting, keeping the reward scale independent of
    aircraft count.
    """

    centreline: tuple[float, ...] = ()
    damping: tuple[float, ...] = ()
    vertical: tuple[float, ...] = ()
    safety: float = 0.0

    def means(self) -> dict[str, float]:
        return {
            "centreline": _mean(self.centreline),
            "damping": _mean(self.damping),
            "vertical": _mean(self.vertical),
            "safety": self.safety,
        }


def _mean(values: tuple[float, ...]) -> float:
    return sum(values) / len(values) if values else 0.0


def total_step_reward(components: StepComponents, weights: RewardWeights) -> float:
    """Weighted sum of the step components (terminal bonus handled separately)."""
    means = components.means()
    return (
        weights.centreline * means["centreline"]
        + weights.damping * means["damping"]
        + weights.safety * means["safety"]
        + weights.vertical * means["vertical"]
    )
