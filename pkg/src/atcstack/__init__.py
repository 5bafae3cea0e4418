"""En-route ATC simulator, PPO trainer, and inference-time action stacking."""

from .airspace import (
    Fix,
    Route,
    Sector,
    SectorError,
    advance_waypoint,
    bearing_to,
    cross_track_distance,
    load_sector,
    relative_turn,
    viable_routes,
)
from .dynamics import AircraftState, Command, Performance, apply_command, own_navigation, step_aircraft
from .env import ActionSpace, AtcEnv, StepResult
from .evaluate import EvalStats, compare_evaluations, run_evaluation
from .ppo import (
    MLPPolicy,
    PPOConfig,
    PolicyCheckpoint,
    collect_rollout,
    compute_gae,
    greedy_action,
    load_checkpoint,
    ppo_update,
    save_checkpoint,
    train,
)
from .rewards import (
    EpisodeSummary,
    PRESETS,
    RewardConfig,
    RewardWeights,
    centreline_reward,
    damping_reward,
    preset_weights,
    safety_reward,
    terminal_rewards,
    total_step_reward,
    vertical_reward,
)
from .safety import SeparationReport, project_min_separation, relative_bearing, separation
from .scenario import (
    AircraftTarget,
    Scenario,
    generate_lateral,
    generate_vertical,
    load_scenario,
    save_scenario,
)
from .stacking import MacroCommand, StackTrace, run_stacked_episode, run_unstacked_episode, stacked_decision

__version__ = "0.1.0"
