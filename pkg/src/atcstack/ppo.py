"""Compact actor-critic PPO over the sector environment.

The policy is a small fully-connected network (two hidden layers of 64
rectified-linear units) with a categorical action head and a scalar value
head sharing the trunk.  Everything is plain float64 numpy with
hand-written backpropagation: the network is tiny, training runs on CPU,
and exact arithmetic makes gradient checks and bit-identical checkpoint
round-trips straightforward.

Randomness is split into named Philox streams derived from the run seed:
scenario generation, action sampling, minibatch shuffling, and weight
initialization each get their own stream, so single-process runs replay
exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .airspace import Sector
from .env import AtcEnv, default_action_space_kind
from .rewards import RewardConfig, RewardWeights, preset_weights
from .scenario import Scenario, VERTICAL, generate
from . import scenario as scenario_mod

CHECKPOINT_FORMAT_VERSION = 1

# Philox stream ids hung off the run seed.
_STREAM_TRAIN_SCENARIOS = 0
_STREAM_EVAL_SCENARIOS = 1
_STREAM_INIT = 10
_STREAM_ACTIONS = 11
_STREAM_SHUFFLE = 12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def derive_seed(root_seed: int, stream: int, *indices: int) -> int:
    """Portable 64-bit sub-seed for a named stream of the run seed."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(stream, *indices))
    return int(ss.generate_state(1, np.uint64)[0])


def _stream_rng(root_seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=root_seed, spawn_key=(stream,))))


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 1e-4
    gamma: float = 0.99
    entropy_coeff: float = 0.01
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    rollout_length: int = 2048       # total env steps per update, across workers
    minibatch_size: int = 64
    epochs_per_update: int = 10
    value_coeff: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 2_000_000
    num_workers: int = 8
    seed: int = 0
    hidden_sizes: tuple[int, ...] = (64, 64)
    eval_interval_steps: int = 100_000
    eval_episodes: int = 20
    normalize_rewards: bool = True
    anneal_lr: bool = True
    value_warmup_steps: int = 160_000
    entropy_coeff_initial: float | None = 0.04  # anneals to entropy_coeff; None = constant
    damping_ramp_steps: int = 1_000_000  # action-damping weight ramps 0 -> preset over this window
    curriculum: bool = False
    curriculum_phase1_steps: int = 2_000_000

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.clip_epsilon <= 0.0:
            raise ValueError("clip_epsilon must be positive")
        if self.rollout_length % self.minibatch_size != 0:
            raise ValueError("rollout_length must be divisible by minibatch_size")
        if self.rollout_length % self.num_workers != 0:
            raise ValueError("rollout_length must be divisible by num_workers")


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    q = u if u.shape == shape else vt
    return gain * q


class MLPPolicy:
    """Shared-trunk categorical policy and value network."""

    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        hidden_sizes: Sequence[int] = (64, 64),
        rng: np.random.Generator | None = None,
    ):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.hidden_sizes = tuple(hidden_sizes)
        rng = rng or np.random.Generator(np.random.Philox(0))
        self.params: dict[str, np.ndarray] = {}
        widths = [obs_dim, *self.hidden_sizes]
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            self.params[f"w{i}"] = _orthogonal(rng, (fan_in, fan_out), gain=np.sqrt(2.0))
            self.params[f"b{i}"] = np.zeros(fan_out)
        last = widths[-1]
        self.params["wp"] = _orthogonal(rng, (last, n_actions), gain=0.01)
        self.params["bp"] = np.zeros(n_actions)
        self.params["wv"] = _orthogonal(rng, (last, 1), gain=1.0)
        self.params["bv"] = np.zeros(1)

    # -- forward -----------------------------------------------------------

    def _trunk(self, x: np.ndarray) -> list[np.ndarray]:
        activations = [x]
        h = x
        for i in range(len(self.hidden_sizes)):
            h = np.maximum(h @ self.params[f"w{i}"] + self.params[f"b{i}"], 0.0)
            activations.append(h)
        return activations

    def forward(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Logits (B, A) and values (B,) for a batch of observations."""
        h = self._trunk(np.atleast_2d(obs))[-1]
        logits = h @ self.params["wp"] + self.params["bp"]
        values = (h @ self.params["wv"] + self.params["bv"]).ravel()
        return logits, values

    @staticmethod
    def log_softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def distribution(self, obs: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(obs)
        return np.exp(self.log_softmax(logits))

    def logprobs_values_entropy(self, obs: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        logits, values = self.forward(obs)
        logp = self.log_softmax(logits)
        picked = logp[np.arange(len(actions)), actions]
        entropy = -(np.exp(logp) * logp).sum(axis=1)
        return picked, values, entropy

    # -- loss and analytic gradients ----------------------------------------

    def loss_and_grads(
        self,
        obs: np.ndarray,
        actions: np.ndarray,
        old_logprobs: np.ndarray,
        advantages: np.ndarray,
        returns: np.ndarray,
        clip_epsilon: float,
        value_coeff: float,
        entropy_coeff: float,
    ) -> tuple[float, dict[str, float], dict[str, np.ndarray]]:
        """Clipped-surrogate PPO loss and its exact gradients.

        Minimizes  policy_loss + value_coeff * value_loss - entropy_coeff * entropy.
        """
        batch = len(actions)
        activations = self._trunk(obs)
        h = activations[-1]
        logits = h @ self.params["wp"] + self.params["bp"]
        values = (h @ self.params["wv"] + self.params["bv"]).ravel()

        logp = self.log_softmax(logits)
        probs = np.exp(logp)
        picked = logp[np.arange(batch), actions]
        ratio = np.exp(picked - old_logprobs)
        unclipped = ratio * advantages
        clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
        surrogate = np.minimum(unclipped, clipped)
        entropy_per = -(probs * logp).sum(axis=1)

        policy_loss = -float(surrogate.mean())
        value_loss = float(((values - returns) ** 2).mean())
        entropy = float(entropy_per.mean())
        total = policy_loss + value_coeff * value_loss - entropy_coeff * entropy

        # d(total)/dlogits: surrogate gradient flows only where the
        # unclipped branch is active; the entropy term regularizes always.
        ds_dratio = np.where(unclipped <= clipped, advantages, 0.0)
        dlogp_picked = -(ds_dratio * ratio) / batch
        one_hot = np.zeros_like(probs)
        one_hot[np.arange(batch), actions] = 1.0
        dlogits = dlogp_picked[:, None] * (one_hot - probs)
        dlogits += (entropy_coeff / batch) * probs * (logp + entropy_per[:, None])

        dvalues = (2.0 * value_coeff / batch) * (values - returns)

        grads: dict[str, np.ndarray] = {
            "wp": h.T @ dlogits,
            "bp": dlogits.sum(axis=0),
            "wv": h.T @ dvalues[:, None],
            "bv": np.array([dvalues.sum()]),
        }
        dh = dlogits @ self.params["wp"].T + dvalues[:, None] @ self.params["wv"].T
        for i in reversed(range(len(self.hidden_sizes))):
            dpre = dh * (activations[i + 1] > 0.0)
            grads[f"w{i}"] = activations[i].T @ dpre
            grads[f"b{i}"] = dpre.sum(axis=0)
            dh = dpre @ self.params[f"w{i}"].T

        metrics = {
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "entropy": entropy,
            "approx_kl": float((old_logprobs - picked).mean()),
            "clip_fraction": float((np.abs(ratio - 1.0) > clip_epsilon).mean()),
            "total_loss": total,
        }
        return total, metrics, grads

    # -- persistence ---------------------------------------------------------

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for key, value in params.items():
            self.params[key] = value.copy()


def greedy_action(policy: MLPPolicy, observation: np.ndarray) -> int:
    """Argmax of the action distribution; ties break toward the lowest index."""
    probs = policy.distribution(np.atleast_2d(observation))[0]
    return int(np.argmax(probs))


def sample_action(policy: MLPPolicy, observation: np.ndarray, rng: np.random.Generator) -> int:
    probs = policy.distribution(np.atleast_2d(observation))[0]
    u = rng.random()
    return min(int((probs.cumsum() < u).sum()), policy.n_actions - 1)


class Adam:
    """Adaptive moment estimation with global gradient-norm clipping."""

    def __init__(self, params: dict[str, np.ndarray], learning_rate: float, max_grad_norm: float = 0.5):
        self.learning_rate = learning_rate
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> float:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        scale = 1.0
        if self.max_grad_norm > 0 and norm > self.max_grad_norm:
            scale = self.max_grad_norm / norm
        self.t += 1
        step_size = self.learning_rate / (1.0 - ADAM_BETA1 ** self.t)
        denom_correct = np.sqrt(1.0 - ADAM_BETA2 ** self.t)
        for key, grad in grads.items():
            g = grad if scale == 1.0 else grad * scale
            m = self.m[key]
            v = self.v[key]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            params[key] -= step_size * m / (np.sqrt(v) / denom_correct + ADAM_EPS)
        return norm

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = {k: v.copy() for k, v in state["m"].items()}
        self.v = {k: v.copy() for k, v in state["v"].items()}


# -- rollout collection ------------------------------------------------------


class RewardNormalizer:
    """Scales the learning signal by the running std of discounted returns.

    The raw environment rewards stay untouched everywhere else (episode
    statistics, evaluation); only the values fed to advantage estimation
    are divided by the running scale.  Keeps the critic's target range
    small from the first updates, which the shaped, strongly negative
    step rewards otherwise prevent.
    """

    def __init__(self, gamma: float, n_envs: int):
        self.gamma = gamma
        self.running_returns = np.zeros(n_envs)
        self.count = 0.0
        self.mean = 0.0
        self.m2 = 0.0

    def scale(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        self.running_returns = self.running_returns * self.gamma + rewards
        for value in self.running_returns:
            self.count += 1.0
            delta = value - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (value - self.mean)
        self.running_returns[dones] = 0.0
        if self.count < 2.0:
            return rewards
        std = np.sqrt(self.m2 / self.count)
        return rewards / (std + 1e-8)

    def state(self) -> dict:
        return {
            "running_returns": self.running_returns.tolist(),
            "count": self.count,
            "mean": self.mean,
            "m2": self.m2,
        }


@dataclass
class EpisodeStats:
    reward: float
    steps: int
    success: bool
    exited_at_target: bool
    stayed_in_bounds: bool
    within_action_budget: bool
    action_counts: tuple[int, ...]
    min_separation_nm: float | None
    mean_components: dict[str, float]


@dataclass
class TrajectoryBatch:
    observations: np.ndarray   # (T, W, obs_dim)
    actions: np.ndarray        # (T, W)
    logprobs: np.ndarray       # (T, W)
    values: np.ndarray         # (T, W)
    rewards: np.ndarray        # (T, W)
    dones: np.ndarray          # (T, W) episode ended after this transition
    bootstrap_values: np.ndarray  # (W,)
    episodes: list[EpisodeStats] = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None


class EnvPool:
    """A set of independent environments stepped round-robin in-process.

    Each worker owns a private environment and a deterministic stream of
    scenario seeds; episodes reset automatically when they finish.
    """

    def __init__(
        self,
        sector: Sector,
        scenario_kind: str,
        action_space_kind: str,
        weights: RewardWeights,
        config: RewardConfig,
        n_envs: int,
        root_seed: int,
        max_steps: int = scenario_mod.DEFAULT_MAX_STEPS,
    ):
        self.sector = sector
        self.scenario_kind = scenario_kind
        self.weights = weights
        self.config = config
        self.root_seed = root_seed
        self.max_steps = max_steps
        self.envs = [AtcEnv(sector, action_space_kind) for _ in range(n_envs)]
        self.episode_indices = [0] * n_envs
        self._component_sums: list[dict[str, float]] = [dict() for _ in range(n_envs)]
        self._reward_sums = [0.0] * n_envs
        self.observations = np.stack([self._reset_env(i) for i in range(n_envs)])

    def _next_scenario(self, env_index: int) -> Scenario:
        seed = derive_seed(self.root_seed, _STREAM_TRAIN_SCENARIOS, env_index, self.episode_indices[env_index])
        self.episode_indices[env_index] += 1
        return generate(self.sector, seed, self.scenario_kind, max_steps=self.max_steps)

    def _reset_env(self, env_index: int) -> np.ndarray:
        self._component_sums[env_index] = {}
        self._reward_sums[env_index] = 0.0
        return self.envs[env_index].reset(self._next_scenario(env_index), self.weights, self.config)

    def set_weights(self, weights: RewardWeights) -> None:
        self.weights = weights
        for env in self.envs:
            env.set_weights(weights)

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @property
    def n_actions(self) -> int:
        return self.envs[0].action_space.size

    def step(self, env_index: int, action: int) -> tuple[float, bool, bool, np.ndarray | None, EpisodeStats | None]:
        """Advance one worker; returns (reward, done, truncated, final_obs, stats).

        ``truncated`` marks episodes cut by the step limit rather than by
        every aircraft having exited; ``final_obs`` is the last observation
        of the finished episode (before the auto-reset).
        """
        env = self.envs[env_index]
        result = env.step(action)
        self._reward_sums[env_index] += result.reward
        sums = self._component_sums[env_index]
        for key, value in result.info["components"].items():
            sums[key] = sums.get(key, 0.0) + value
        stats = None
        truncated = False
        final_obs = None
        if result.done:
            truncated = not all(result.info["exited"])
            final_obs = result.observation
            summary = result.info["criteria"]
            included = [summary.exited_at_target, summary.stayed_in_bounds]
            if self.weights.include_action_criterion:
                included.append(summary.within_action_budget)
            steps = env.step_count
            stats = EpisodeStats(
                reward=self._reward_sums[env_index],
                steps=steps,
                success=all(included),
                exited_at_target=summary.exited_at_target,
                stayed_in_bounds=summary.stayed_in_bounds,
                within_action_budget=summary.within_action_budget,
                action_counts=result.info["action_counts"],
                min_separation_nm=env.min_separation_nm,
                mean_components={k: v / steps for k, v in sums.items()},
            )
            self.observations[env_index] = self._reset_env(env_index)
        else:
            self.observations[env_index] = result.observation
        return result.reward, result.done, truncated, final_obs, stats


def collect_rollout(
    policy: MLPPolicy,
    pool: EnvPool,
    length: int,
    rng: np.random.Generator,
    normalizer: RewardNormalizer | None = None,
    gamma: float = 0.99,
) -> TrajectoryBatch:
    """Gather `length` transitions across the pool by sampling the policy.

    Episodes cut by the step limit are value-bootstrapped: the discounted
    value of the final observation is folded into that step's reward, so
    the critic learns the stationary task rather than the arbitrary
    truncation point.
    """
    n_envs = len(pool.envs)
    if length % n_envs != 0:
        raise ValueError("rollout length must be divisible by the number of envs")
    horizon = length // n_envs

    obs_buf = np.empty((horizon, n_envs, pool.obs_dim))
    act_buf = np.empty((horizon, n_envs), dtype=np.int64)
    logp_buf = np.empty((horizon, n_envs))
    value_buf = np.empty((horizon, n_envs))
    reward_buf = np.empty((horizon, n_envs))
    done_buf = np.zeros((horizon, n_envs), dtype=bool)
    episodes: list[EpisodeStats] = []

    for t in range(horizon):
        obs = pool.observations.copy()
        logits, values = policy.forward(obs)
        logp = policy.log_softmax(logits)
        cdf = np.exp(logp).cumsum(axis=1)
        u = rng.random((n_envs, 1))
        actions = np.minimum((cdf < u).sum(axis=1), policy.n_actions - 1)

        obs_buf[t] = obs
        act_buf[t] = actions
        logp_buf[t] = logp[np.arange(n_envs), actions]
        value_buf[t] = values
        truncated_obs: list[tuple[int, np.ndarray]] = []
        for i in range(n_envs):
            reward, done, truncated, final_obs, stats = pool.step(i, int(actions[i]))
            reward_buf[t, i] = reward
            done_buf[t, i] = done
            if truncated:
                truncated_obs.append((i, final_obs))
            if stats is not None:
                episodes.append(stats)
        if normalizer is not None:
            reward_buf[t] = normalizer.scale(reward_buf[t], done_buf[t])
        for i, final_obs in truncated_obs:
            _, final_value = policy.forward(final_obs[None, :])
            reward_buf[t, i] += gamma * float(final_value[0])

    _, bootstrap = policy.forward(pool.observations)
    return TrajectoryBatch(
        observations=obs_buf,
        actions=act_buf,
        logprobs=logp_buf,
        values=value_buf,
        rewards=reward_buf,
        dones=done_buf,
        bootstrap_values=bootstrap,
        episodes=episodes,
    )


def compute_gae(batch: TrajectoryBatch, gamma: float, gae_lambda: float) -> TrajectoryBatch:
    """Generalized advantage estimates with episode-boundary masking.

    Advantages are normalized to zero mean and unit variance across the
    whole batch; raw advantages + values form the value targets.
    """
    horizon, n_envs = batch.rewards.shape
    advantages = np.zeros((horizon, n_envs))
    last_gae = np.zeros(n_envs)
    for t in reversed(range(horizon)):
        if t == horizon - 1:
            next_values = batch.bootstrap_values
        else:
            next_values = batch.values[t + 1]
        non_terminal = 1.0 - batch.dones[t].astype(np.float64)
        delta = batch.rewards[t] + gamma * next_values * non_terminal - batch.values[t]
        last_gae = delta + gamma * gae_lambda * non_terminal * last_gae
        advantages[t] = last_gae
    returns = advantages + batch.values
    std = advantages.std()
    normalized = (advantages - advantages.mean()) / (std + 1e-8)
    batch.advantages = normalized
    batch.returns = returns
    return batch


def ppo_update(
    policy: MLPPolicy,
    batch: TrajectoryBatch,
    config: PPOConfig,
    optimizer: Adam,
    rng: np.random.Generator,
    value_only: bool = False,
    entropy_coeff: float | None = None,
) -> dict[str, float]:
    """Epochs of clipped-surrogate minibatch updates over one batch.

    With ``value_only`` the actor is left untouched (zero advantages and no
    entropy term make the policy gradient vanish exactly); used to warm up
    the critic before the first policy updates.  ``entropy_coeff`` overrides
    the config value (the trainer anneals it).
    """
    if batch.advantages is None or batch.returns is None:
        raise ValueError("run compute_gae before ppo_update")
    obs = batch.observations.reshape(-1, batch.observations.shape[-1])
    actions = batch.actions.reshape(-1)
    old_logp = batch.logprobs.reshape(-1)
    advantages = np.zeros_like(old_logp) if value_only else batch.advantages.reshape(-1)
    if entropy_coeff is None:
        entropy_coeff = config.entropy_coeff
    if value_only:
        entropy_coeff = 0.0
    returns = batch.returns.reshape(-1)

    n = len(actions)
    totals: dict[str, float] = {}
    count = 0
    grad_norm = 0.0
    for _ in range(config.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            loss, metrics, grads = policy.loss_and_grads(
                obs[idx],
                actions[idx],
                old_logp[idx],
                advantages[idx],
                returns[idx],
                config.clip_epsilon,
                config.value_coeff,
                entropy_coeff,
            )
            if not np.isfinite(loss):
                totals["aborted"] = 1.0
                averaged = {k: v / max(count, 1) for k, v in totals.items() if k != "aborted"}
                averaged["aborted"] = 1.0
                averaged["grad_norm"] = grad_norm / max(count, 1)
                return averaged
            grad_norm += optimizer.step(policy.params, grads)
            for key, value in metrics.items():
                totals[key] = totals.get(key, 0.0) + value
            count += 1
    averaged = {k: v / count for k, v in totals.items()}
    averaged["aborted"] = 0.0
    averaged["grad_norm"] = grad_norm / count
    return averaged


# -- checkpointing -------------------------------------------------------------


@dataclass
class PolicyCheckpoint:
    policy: MLPPolicy
    config: PPOConfig
    env_kind: str
    action_space_kind: str
    preset_name: str
    weights: RewardWeights
    reward_config: RewardConfig
    trained_steps: int
    optimizer_state: dict | None = None
    format_version: int = CHECKPOINT_FORMAT_VERSION


def save_checkpoint(checkpoint: PolicyCheckpoint, path: str | Path) -> None:
    """Write a checkpoint as a numpy archive with a JSON metadata record."""
    arrays: dict[str, np.ndarray] = {}
    for key, value in checkpoint.policy.params.items():
        arrays[f"param_{key}"] = value
    if checkpoint.optimizer_state is not None:
        for key, value in checkpoint.optimizer_state["m"].items():
            arrays[f"adam_m_{key}"] = value
        for key, value in checkpoint.optimizer_state["v"].items():
            arrays[f"adam_v_{key}"] = value
    meta = {
        "format_version": checkpoint.format_version,
        "obs_dim": checkpoint.policy.obs_dim,
        "n_actions": checkpoint.policy.n_actions,
        "hidden_sizes": list(checkpoint.policy.hidden_sizes),
        "config": asdict(checkpoint.config),
        "env_kind": checkpoint.env_kind,
        "action_space_kind": checkpoint.action_space_kind,
        "preset_name": checkpoint.preset_name,
        "weights": asdict(checkpoint.weights),
        "reward_config": asdict(checkpoint.reward_config),
        "trained_steps": checkpoint.trained_steps,
        "adam_t": None if checkpoint.optimizer_state is None else checkpoint.optimizer_state["t"],
    }
    arrays["meta_json"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)


def load_checkpoint(path: str | Path) -> PolicyCheckpoint:
    with np.load(Path(path)) as archive:
        meta = json.loads(bytes(archive["meta_json"].tobytes()).decode())
        if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format_version: {meta['format_version']}")
        config_doc = dict(meta["config"])
        config_doc["hidden_sizes"] = tuple(config_doc["hidden_sizes"])
        config = PPOConfig(**config_doc)
        policy = MLPPolicy(meta["obs_dim"], meta["n_actions"], tuple(meta["hidden_sizes"]))
        for key in list(policy.params):
            policy.params[key] = archive[f"param_{key}"].copy()
        optimizer_state = None
        if meta["adam_t"] is not None:
            optimizer_state = {
                "t": meta["adam_t"],
                "m": {k: archive[f"adam_m_{k}"].copy() for k in policy.params},
                "v": {k: archive[f"adam_v_{k}"].copy() for k in policy.params},
            }
    weights_doc = dict(meta["weights"])
    return PolicyCheckpoint(
        policy=policy,
        config=config,
        env_kind=meta["env_kind"],
        action_space_kind=meta["action_space_kind"],
        preset_name=meta["preset_name"],
        weights=RewardWeights(**weights_doc),
        reward_config=RewardConfig(**meta["reward_config"]),
        trained_steps=meta["trained_steps"],
        optimizer_state=optimizer_state,
    )


# -- evaluation and training ----------------------------------------------------


def run_greedy_episode(policy: MLPPolicy, env: AtcEnv, scenario: Scenario, weights: RewardWeights, config: RewardConfig) -> EpisodeStats:
    obs = env.reset(scenario, weights, config)
    total = 0.0
    sums: dict[str, float] = {}
    result = None
    while not env.done:
        result = env.step(greedy_action(policy, obs))
        obs = result.observation
        total += result.reward
        for key, value in result.info["components"].items():
            sums[key] = sums.get(key, 0.0) + value
    summary = result.info["criteria"]
    included = [summary.exited_at_target, summary.stayed_in_bounds]
    if weights.include_action_criterion:
        included.append(summary.within_action_budget)
    return EpisodeStats(
        reward=total,
        steps=env.step_count,
        success=all(included),
        exited_at_target=summary.exited_at_target,
        stayed_in_bounds=summary.stayed_in_bounds,
        within_action_budget=summary.within_action_budget,
        action_counts=result.info["action_counts"],
        min_separation_nm=env.min_separation_nm,
        mean_components={k: v / env.step_count for k, v in sums.items()},
    )


def _aggregate_episode_stats(episodes: list[EpisodeStats]) -> dict[str, float]:
    if not episodes:
        return {"episodes": 0}
    mean_actions = float(np.mean([sum(e.action_counts) / len(e.action_counts) for e in episodes]))
    separations = [e.min_separation_nm for e in episodes if e.min_separation_nm is not None]
    safety = [e.mean_components.get("safety", 0.0) for e in episodes]
    return {
        "episodes": len(episodes),
        "mean_reward": float(np.mean([e.reward for e in episodes])),
        "success_rate": float(np.mean([e.success for e in episodes])),
        "exit_rate": float(np.mean([e.exited_at_target for e in episodes])),
        "bounds_rate": float(np.mean([e.stayed_in_bounds for e in episodes])),
        "budget_rate": float(np.mean([e.within_action_budget for e in episodes])),
        "mean_actions": mean_actions,
        "mean_min_separation": float(np.mean(separations)) if separations else None,
        "mean_safety": float(np.mean(safety)),
    }


def _evaluate(
    policy: MLPPolicy,
    sector: Sector,
    scenario_kind: str,
    action_space_kind: str,
    weights: RewardWeights,
    config: RewardConfig,
    root_seed: int,
    episodes: int,
    max_steps: int,
) -> dict[str, float]:
    env = AtcEnv(sector, action_space_kind)
    stats = []
    for i in range(episodes):
        seed = derive_seed(root_seed, _STREAM_EVAL_SCENARIOS, i)
        scenario = generate(sector, seed, scenario_kind, max_steps=max_steps)
        stats.append(run_greedy_episode(policy, env, scenario, weights, config))
    return _aggregate_episode_stats(stats)


def train(
    sector: Sector,
    scenario_kind: str,
    preset_name: str,
    config: PPOConfig,
    reward_config: RewardConfig | None = None,
    action_space_kind: str | None = None,
    weights: RewardWeights | None = None,
    max_steps: int = scenario_mod.DEFAULT_MAX_STEPS,
    log_path: str | Path | None = None,
    progress: Callable[[dict], None] | None = None,
) -> PolicyCheckpoint:
    """Run the collect/update loop to the configured number of steps.

    With ``config.curriculum`` set, trains the first phase with the safety
    component zeroed (navigation only) and switches to the full weighting
    afterwards.  Returns the final checkpoint; writes one JSON record per
    update (and per evaluation) to ``log_path`` when given.
    """
    reward_config = reward_config or RewardConfig()
    target_weights = weights if weights is not None else preset_weights(preset_name)
    action_space_kind = action_space_kind or default_action_space_kind(scenario_kind)

    phases: list[tuple[int, RewardWeights]]
    if config.curriculum:
        phase1 = min(config.curriculum_phase1_steps, config.total_steps)
        phases = [(phase1, replace(target_weights, safety=0.0)), (config.total_steps - phase1, target_weights)]
    else:
        phases = [(config.total_steps, target_weights)]

    pool = EnvPool(
        sector,
        scenario_kind,
        action_space_kind,
        phases[0][1],
        reward_config,
        config.num_workers,
        config.seed,
        max_steps=max_steps,
    )
    init_rng = _stream_rng(config.seed, _STREAM_INIT)
    action_rng = _stream_rng(config.seed, _STREAM_ACTIONS)
    shuffle_rng = _stream_rng(config.seed, _STREAM_SHUFFLE)
    policy = MLPPolicy(pool.obs_dim, pool.n_actions, config.hidden_sizes, rng=init_rng)
    optimizer = Adam(policy.params, config.learning_rate, config.max_grad_norm)
    normalizer = RewardNormalizer(config.gamma, config.num_workers) if config.normalize_rewards else None

    log_handle = open(log_path, "w") if log_path is not None else None
    started = time.monotonic()

    def emit(record: dict) -> None:
        # Log records carry no wall-clock fields so identical runs write
        # identical logs; timing goes only to the live progress callback.
        if log_handle is not None:
            log_handle.write(json.dumps(record, sort_keys=True) + "\n")
            log_handle.flush()
        if progress is not None:
            progress({**record, "elapsed_s": round(time.monotonic() - started, 1)})

    global_step = 0
    next_eval = 0
    phase_boundaries = np.cumsum([steps for steps, _ in phases])
    try:
        while global_step < config.total_steps:
            phase_idx = int(np.searchsorted(phase_boundaries, global_step, side="right"))
            phase_idx = min(phase_idx, len(phases) - 1)
            phase_weights = phases[phase_idx][1]
            if config.damping_ramp_steps > 0 and global_step < config.damping_ramp_steps:
                # Instruction pruning is learnable only once basic navigation
                # is; phase the damping penalty in rather than trapping the
                # policy in a never-act optimum from the first updates.
                ramp = global_step / config.damping_ramp_steps
                phase_weights = replace(phase_weights, damping=phase_weights.damping * ramp)
            if pool.weights != phase_weights:
                pool.set_weights(phase_weights)

            if global_step >= next_eval:
                eval_stats = _evaluate(
                    policy, sector, scenario_kind, action_space_kind,
                    phases[phase_idx][1], reward_config,
                    config.seed, config.eval_episodes, max_steps,
                )
                emit({"type": "eval", "step": global_step, "phase": phase_idx + 1, **eval_stats})
                next_eval += config.eval_interval_steps

            fraction = global_step / config.total_steps
            if config.anneal_lr:
                # Full strength while the task is being discovered, linear
                # decay over the second half for final polish.
                optimizer.learning_rate = config.learning_rate * min(1.0, 2.0 * (1.0 - fraction))
            entropy_coeff = config.entropy_coeff
            if config.entropy_coeff_initial is not None:
                entropy_coeff = config.entropy_coeff_initial + fraction * (
                    config.entropy_coeff - config.entropy_coeff_initial
                )
            batch = collect_rollout(policy, pool, config.rollout_length, action_rng, normalizer, config.gamma)
            batch = compute_gae(batch, config.gamma, config.gae_lambda)
            warming_up = global_step < config.value_warmup_steps
            metrics = ppo_update(
                policy, batch, config, optimizer, shuffle_rng,
                value_only=warming_up, entropy_coeff=entropy_coeff,
            )
            global_step += config.rollout_length

            record = {
                "type": "update",
                "step": global_step,
                "phase": phase_idx + 1,
                **{k: round(v, 6) for k, v in metrics.items()},
                **_aggregate_episode_stats(batch.episodes),
            }
            emit(record)

        final_eval = _evaluate(
            policy, sector, scenario_kind, action_space_kind,
            phases[-1][1], reward_config,
            config.seed, config.eval_episodes, max_steps,
        )
        emit({"type": "eval", "step": global_step, "phase": len(phases), **final_eval})
    finally:
        if log_handle is not None:
            log_handle.close()

    return PolicyCheckpoint(
        policy=policy,
        config=config,
        env_kind=scenario_kind,
        action_space_kind=action_space_kind,
        preset_name=preset_name,
        weights=target_weights,
        reward_config=reward_config,
        trained_steps=global_step,
        optimizer_state=optimizer.state(),
    )
