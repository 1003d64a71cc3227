"""Proximal policy optimization on top of ``twostage.nn``.

Layout conventions: rollout arrays are ``(num_workers, T, ...)`` and are
flattened worker-major for updates, so batches are reproducible for a fixed
seed and worker count regardless of how workers are scheduled.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError
from .nn import (
    HALF_LOG_2PI,
    GaussianPolicy,
    MlpParams,
    MlpSpec,
    NumericError,
    OptimizerState,
    _backward,
    _forward_trace,
    diag_gaussian_log_prob,
    load_arrays,
    mlp_forward,
    mlp_from_arrays,
    mlp_init,
    mlp_to_arrays,
    optimizer_step,
    save_arrays,
)

CURVE_COLUMNS = ("env_steps", "mean_return", "normalized_return", "episodes", "approx_kl",
                 "policy_loss", "value_loss")


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs_per_update: int = 10
    minibatch_size: int = 256
    steps_per_update: int = 2048
    num_workers: int = 4
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    total_env_steps: int = 1_000_000
    max_grad_norm: float = 0.5
    hidden_sizes: tuple[int, ...] = (64, 64)
    init_log_std: float = 0.0
    normalize_rewards: bool = False
    checkpoint_every: int = 0

    def validate(self) -> None:
        problems = []
        if not 0.0 < self.gamma <= 1.0:
            problems.append("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            problems.append("gae_lambda must be in [0, 1]")
        for name in ("clip_epsilon", "value_coef", "learning_rate", "max_grad_norm"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        for name in ("epochs_per_update", "minibatch_size", "steps_per_update", "num_workers",
                     "total_env_steps"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.entropy_coef < 0:
            problems.append("entropy_coef must be >= 0")
        if self.num_workers >= 1 and self.total_env_steps % self.num_workers:
            problems.append("total_env_steps must be a multiple of num_workers")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            problems.append("hidden_sizes must be positive")
        if problems:
            raise ConfigError("; ".join(problems))


# --- agent -------------------------------------------------------------------

@dataclass
class Agent:
    """Policy and value nets plus the fixed affine maps between env units and
    network units, derived from the env's declared observation/action bounds."""

    policy: GaussianPolicy
    value_net: MlpParams
    obs_low: np.ndarray
    obs_high: np.ndarray
    act_low: np.ndarray
    act_high: np.ndarray
    env_id: str = ""

    def __post_init__(self):
        self._obs_center = 0.5 * (self.obs_low + self.obs_high)
        half = 0.5 * (self.obs_high - self.obs_low)
        self._obs_scale = np.where(half > 0, half, 1.0)
        self._act_center = 0.5 * (self.act_low + self.act_high)
        self._act_scale = 0.5 * (self.act_high - self.act_low)

    def net_input(self, obs) -> np.ndarray:
        return (np.asarray(obs, dtype=np.float64) - self._obs_center) / self._obs_scale

    def to_env_action(self, u) -> np.ndarray:
        return self._act_center + self._act_scale * u

    def mean(self, obs) -> np.ndarray:
        return mlp_forward(self.policy.mean_net, self.net_input(obs))

    def value(self, obs) -> np.ndarray:
        return mlp_forward(self.value_net, self.net_input(obs))[..., 0]

    def deterministic_action(self, obs) -> np.ndarray:
        return self.to_env_action(self.mean(obs))

    def log_prob(self, obs, u) -> np.ndarray:
        return diag_gaussian_log_prob(self.mean(obs), self.policy.log_std, u)

    def param_arrays(self) -> list[np.ndarray]:
        return self.policy.mean_net.arrays() + [self.policy.log_std] + self.value_net.arrays()

    def set_param_arrays(self, arrays: Sequence[np.ndarray]) -> None:
        n = len(self.policy.mean_net.arrays())
        self.policy.mean_net = MlpParams.from_arrays(self.policy.mean_net.spec, arrays[:n])
        self.policy.log_std = np.asarray(arrays[n])
        self.policy.clamp_log_std()
        self.value_net = MlpParams.from_arrays(self.value_net.spec, arrays[n + 1:])


def make_agent(env, config: PpoConfig, seed: int | np.random.Generator) -> Agent:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    obs_dim = env.observation_space.dimension
    act_dim = env.action_space.dimension
    hidden = tuple(config.hidden_sizes)
    pi_net = mlp_init(MlpSpec((obs_dim, *hidden, act_dim)), rng)
    v_net = mlp_init(MlpSpec((obs_dim, *hidden, 1)), rng, output_gain=1.0)
    policy = GaussianPolicy(pi_net, np.full(act_dim, config.init_log_std))
    return Agent(policy, v_net, env.observation_space.low, env.observation_space.high,
                 env.action_space.low, env.action_space.high, env.env_id)


def save_agent(path, agent: Agent) -> None:
    arrays = {}
    arrays.update(mlp_to_arrays("policy", agent.policy.mean_net))
    arrays["policy.log_std"] = agent.policy.log_std
    arrays.update(mlp_to_arrays("value", agent.value_net))
    arrays.update({"obs_low": agent.obs_low, "obs_high": agent.obs_high,
                   "act_low": agent.act_low, "act_high": agent.act_high})
    meta = {"kind": "agent", "env_id": agent.env_id,
            "policy_layers": list(agent.policy.mean_net.spec.layer_sizes),
            "value_layers": list(agent.value_net.spec.layer_sizes)}
    save_arrays(path, arrays, meta)


def load_agent(path) -> Agent:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "agent":
        raise ValueError(f"{path}: not an agent checkpoint")
    pi = mlp_from_arrays("policy", MlpSpec(tuple(meta["policy_layers"])), arrays)
    v = mlp_from_arrays("value", MlpSpec(tuple(meta["value_layers"])), arrays)
    return Agent(GaussianPolicy(pi, arrays["policy.log_std"]), v, arrays["obs_low"], arrays["obs_high"],
                 arrays["act_low"], arrays["act_high"], meta.get("env_id", ""))


# --- rollouts ----------------------------------------------------------------

@dataclass
class RolloutBatch:
    observations: np.ndarray  # (W, T, obs_dim), env units
    actions: np.ndarray  # (W, T, act_dim), network units (pre-scaling, pre-clamp)
    log_probs: np.ndarray  # (W, T)
    rewards: np.ndarray  # (W, T)
    values: np.ndarray  # (W, T)
    terminated: np.ndarray  # (W, T) bool
    truncated: np.ndarray  # (W, T) bool
    bootstrap_values: np.ndarray  # (W, T), V(final obs) where truncated, else 0
    last_values: np.ndarray  # (W,), V(obs after the last step)
    episode_returns: list[float] = field(default_factory=list)
    episode_lengths: list[int] = field(default_factory=list)

    @property
    def num_workers(self) -> int:
        return self.rewards.shape[0]

    @property
    def horizon(self) -> int:
        return self.rewards.shape[1]

    def __len__(self):
        return self.rewards.size


class WorkerPool:
    """One environment and one RNG stream per worker, plus the carried-over
    observation and partial-episode statistics between rollout batches."""

    def __init__(self, envs: Sequence, seed: int):
        self.envs = list(envs)
        streams = np.random.SeedSequence(seed).spawn(len(self.envs))
        self.rngs = [np.random.default_rng(s) for s in streams]
        self.obs = [env.reset(seed=seed * 10_007 + w) for w, env in enumerate(self.envs)]
        self.ep_return = [0.0] * len(self.envs)
        self.ep_length = [0] * len(self.envs)

    def __len__(self):
        return len(self.envs)


def collect_rollouts(agent: Agent, pool: WorkerPool, steps_per_update: int) -> RolloutBatch:
    """Advance every worker ``steps_per_update`` times, resetting finished
    episodes. Env faults propagate and abort the batch."""
    n_w, T = len(pool), steps_per_update
    obs_dim = agent.obs_low.shape[0]
    act_dim = agent.policy.action_dim
    obs_buf = np.zeros((n_w, T, obs_dim))
    act_buf = np.zeros((n_w, T, act_dim))
    logp_buf = np.zeros((n_w, T))
    rew_buf = np.zeros((n_w, T))
    val_buf = np.zeros((n_w, T))
    term_buf = np.zeros((n_w, T), dtype=bool)
    trunc_buf = np.zeros((n_w, T), dtype=bool)
    boot_buf = np.zeros((n_w, T))
    boot_requests: list[tuple[int, int, np.ndarray]] = []
    ep_returns, ep_lengths = [], []
    std = np.exp(agent.policy.log_std)

    for t in range(T):
        obs = np.array(pool.obs)
        x = agent.net_input(obs)
        mean = mlp_forward(agent.policy.mean_net, x)
        values = mlp_forward(agent.value_net, x)[:, 0]
        noise = np.array([rng.standard_normal(act_dim) for rng in pool.rngs])
        u = mean + std * noise
        logp = diag_gaussian_log_prob(mean, agent.policy.log_std, u)
        env_actions = agent.to_env_action(u)
        obs_buf[:, t] = obs
        act_buf[:, t] = u
        logp_buf[:, t] = logp
        val_buf[:, t] = values
        for w, env in enumerate(pool.envs):
            res = env.step(env_actions[w])
            rew_buf[w, t] = res.reward
            term_buf[w, t] = res.terminated
            trunc_buf[w, t] = res.truncated
            pool.ep_return[w] += res.reward
            pool.ep_length[w] += 1
            if res.terminated or res.truncated:
                if res.truncated:
                    boot_requests.append((w, t, res.observation))
                ep_returns.append(pool.ep_return[w])
                ep_lengths.append(pool.ep_length[w])
                pool.ep_return[w] = 0.0
                pool.ep_length[w] = 0
                pool.obs[w] = env.reset()
            else:
                pool.obs[w] = res.observation

    if boot_requests:
        vb = agent.value(np.array([o for _, _, o in boot_requests]))
        for (w, t, _), v in zip(boot_requests, vb):
            boot_buf[w, t] = v
    last_values = agent.value(np.array(pool.obs))
    return RolloutBatch(obs_buf, act_buf, logp_buf, rew_buf, val_buf, term_buf, trunc_buf, boot_buf,
                        last_values, ep_returns, ep_lengths)


def compute_gae(batch: RolloutBatch, gamma: float, gae_lambda: float, rewards=None):
    """Advantages and returns, each ``(W, T)``. Episodes are cut at
    termination (no bootstrap) and truncation (bootstrap with V(s_T))."""
    r = batch.rewards if rewards is None else rewards
    adv = kernels.gae(r, batch.values, batch.terminated.astype(np.uint8),
                      batch.truncated.astype(np.uint8), batch.bootstrap_values, batch.last_values,
                      gamma, gae_lambda)
    return adv, adv + batch.values


class RewardScaler:
    """Divides rewards by the running standard deviation of the discounted
    return, the usual PPO reward normalization. Rewards are not shifted."""

    def __init__(self, gamma: float, n_workers: int):
        self.gamma = gamma
        self.ret = np.zeros(n_workers)
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def _update(self, xs: np.ndarray) -> None:
        for x in xs:
            self.count += 1
            d = x - self.mean
            self.mean += d / self.count
            self.m2 += d * (x - self.mean)

    def scale(self, batch: RolloutBatch) -> np.ndarray:
        done = batch.terminated | batch.truncated
        for t in range(batch.horizon):
            self.ret = self.ret * self.gamma + batch.rewards[:, t]
            self._update(self.ret)
            self.ret[done[:, t]] = 0.0
        var = self.m2 / self.count if self.count > 1 else 0.0
        std = math.sqrt(var)
        if std <= 0.0:
            return batch.rewards.copy()
        return batch.rewards / std


# --- update ------------------------------------------------------------------

def clipped_surrogate(ratio: np.ndarray, advantages: np.ndarray, clip_epsilon: float) -> np.ndarray:
    """Per-sample ``min(r A, clip(r, 1-eps, 1+eps) A)``."""
    return np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if adv.size < 2:
        return adv - adv.mean()
    centered = adv - adv.mean()
    std = centered.std()
    if std == 0.0:
        return centered
    out = centered / std
    # second pass removes the residual rounding in mean and scale
    out -= out.mean()
    return out / out.std()


def _global_clip(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        s = max_norm / (total + 1e-12)
        grads = [g * s for g in grads]
    return grads, total


def ppo_loss_and_grads(agent: Agent, x: np.ndarray, u: np.ndarray, old_logp: np.ndarray, adv: np.ndarray,
                       ret: np.ndarray, config: PpoConfig):
    """Minibatch loss ``-L_clip - c_e H + c_v L_v`` and its gradient, ordered
    like ``agent.param_arrays()``. ``x`` is already in network units."""
    b = len(x)
    eps = config.clip_epsilon
    pi_trace = _forward_trace(agent.policy.mean_net, x)
    mean = pi_trace[-1]
    log_std = agent.policy.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = u - mean
    z2 = diff * diff * inv_var
    logp = np.sum(-0.5 * z2 - log_std - HALF_LOG_2PI, axis=1)
    log_ratio = logp - old_logp
    ratio = np.exp(log_ratio)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    entropy = float(np.sum(log_std + 0.5 + HALF_LOG_2PI))
    v_trace = _forward_trace(agent.value_net, x)
    v_err = v_trace[-1][:, 0] - ret
    value_loss = float(np.mean(v_err * v_err))
    loss = policy_loss - config.entropy_coef * entropy + config.value_coef * value_loss
    stats = {"policy_loss": policy_loss, "value_loss": value_loss, "entropy": entropy,
             "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
             "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps))}
    if not math.isfinite(loss):
        return loss, None, stats

    # the unclipped branch is the one carrying gradient
    active = (surr1 <= surr2).astype(np.float64)
    dlogp = -active * ratio * adv / b
    g_mean = dlogp[:, None] * diff * inv_var
    g_logstd = np.sum(dlogp[:, None] * (z2 - 1.0), axis=0) - config.entropy_coef
    g_pi = _backward(agent.policy.mean_net, x, g_mean, pi_trace).arrays()
    g_v = _backward(agent.value_net, x, (config.value_coef * 2.0 * v_err / b)[:, None], v_trace).arrays()
    return loss, g_pi + [g_logstd] + g_v, stats


def ppo_update(agent: Agent, opt: OptimizerState, batch: RolloutBatch, advantages: np.ndarray,
               returns: np.ndarray, config: PpoConfig, rng: np.random.Generator):
    """Clipped-surrogate policy and value regression over shuffled minibatches.

    Mutates ``agent``; returns ``(new optimizer state, stats dict)``.
    """
    n = len(batch)
    obs = agent.net_input(batch.observations.reshape(n, -1))
    u = batch.actions.reshape(n, -1)
    old_logp = batch.log_probs.reshape(n)
    adv = normalize_advantages(advantages.reshape(n))
    ret = returns.reshape(n)
    mb = min(config.minibatch_size, n)

    sums = dict.fromkeys(("policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction"), 0.0)
    n_mb = 0
    skipped = 0
    for _ in range(config.epochs_per_update):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            _, grads, parts = ppo_loss_and_grads(agent, obs[idx], u[idx], old_logp[idx], adv[idx], ret[idx],
                                                 config)
            if grads is None:
                skipped += 1
                continue
            grads, _ = _global_clip(grads, config.max_grad_norm)
            try:
                new_params, opt = optimizer_step(agent.param_arrays(), grads, opt)
            except NumericError:
                skipped += 1
                continue
            agent.set_param_arrays(new_params)
            for k in sums:
                sums[k] += parts[k]
            n_mb += 1
    stats = {k: (v / n_mb if n_mb else float("nan")) for k, v in sums.items()}
    stats["skipped_minibatches"] = skipped
    stats["minibatches"] = n_mb
    return opt, stats


# --- learning curves ---------------------------------------------------------

@dataclass
class CurvePoint:
    env_steps: int
    mean_return: float
    normalized_return: float
    episodes: int
    approx_kl: float
    policy_loss: float
    value_loss: float
    mean_length: float = float("nan")


@dataclass
class LearningCurve:
    max_return: float
    points: list[CurvePoint] = field(default_factory=list)

    def append(self, p: CurvePoint) -> None:
        if self.points and p.env_steps <= self.points[-1].env_steps:
            raise ValueError("env_steps must be strictly increasing")
        self.points.append(p)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, LearningCurve):
            return NotImplemented
        return self.to_rows() == other.to_rows()

    def to_rows(self) -> list[tuple]:
        return [tuple(getattr(p, c) for c in CURVE_COLUMNS) for p in self.points]

    @property
    def final_normalized(self) -> float:
        return self.points[-1].normalized_return if self.points else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_COLUMNS)
            for row in self.to_rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    @classmethod
    def read_csv(cls, path, max_return: float = float("nan")) -> "LearningCurve":
        curve = cls(max_return)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
                raise ValueError(f"{path}: unexpected curve columns {reader.fieldnames}")
            for row in reader:
                curve.points.append(CurvePoint(
                    int(row["env_steps"]), float(row["mean_return"]), float(row["normalized_return"]),
                    int(row["episodes"]), float(row["approx_kl"]), float(row["policy_loss"]),
                    float(row["value_loss"])))
        return curve


# --- training loop -----------------------------------------------------------

def train(env_factory: Callable[[int], object], config: PpoConfig, seed: int,
          checkpoint_dir=None, log: Callable[[str], None] | None = print,
          curve_path=None, agent: Agent | None = None):
    """Alternate rollout collection and updates until ``total_env_steps``.

    ``env_factory(worker_index)`` builds one environment. Returns
    ``(agent, LearningCurve)``. On an exception the partial curve is written
    to ``curve_path`` (when given) before re-raising.
    """
    config.validate()
    envs = [env_factory(w) for w in range(config.num_workers)]
    seeds = np.random.SeedSequence(seed).spawn(3)
    init_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    pool = WorkerPool(envs, int(seeds[2].generate_state(1)[0]))
    if agent is None:
        agent = make_agent(envs[0], config, init_rng)
    opt = OptimizerState.for_params(agent.param_arrays(), learning_rate=config.learning_rate)
    scaler = RewardScaler(config.gamma, config.num_workers) if config.normalize_rewards else None
    max_ret = float(envs[0].theoretical_max_return())
    curve = LearningCurve(max_ret)
    steps_done = 0
    last_mean = float("nan")
    last_len = float("nan")
    update = 0
    try:
        while steps_done < config.total_env_steps:
            remaining = config.total_env_steps - steps_done
            horizon = min(config.steps_per_update, remaining // config.num_workers)
            t0 = time.perf_counter()
            batch = collect_rollouts(agent, pool, horizon)
            t_collect = time.perf_counter() - t0
            steps_done += len(batch)
            rewards = scaler.scale(batch) if scaler is not None else None
            adv, ret = compute_gae(batch, config.gamma, config.gae_lambda, rewards)
            opt, stats = ppo_update(agent, opt, batch, adv, ret, config, shuffle_rng)
            update += 1
            if batch.episode_returns:
                last_mean = float(np.mean(batch.episode_returns))
                last_len = float(np.mean(batch.episode_lengths))
            curve.append(CurvePoint(steps_done, last_mean, last_mean / max_ret, len(batch.episode_returns),
                                    stats["approx_kl"], stats["policy_loss"], stats["value_loss"],
                                    last_len if batch.episode_returns else float("nan")))
            if log is not None:
                log(f"update {update:4d} steps {steps_done:9d} return {last_mean:.5g} "
                    f"norm {last_mean / max_ret:.4f} eps {len(batch.episode_returns):4d} "
                    f"kl {stats['approx_kl']:.4f} std {float(np.mean(np.exp(agent.policy.log_std))):.3f} "
                    f"collect {1e6 * t_collect / len(batch):.1f}us/step")
            if checkpoint_dir is not None and config.checkpoint_every and update % config.checkpoint_every == 0:
                save_agent(Path(checkpoint_dir) / f"agent_update{update:05d}.ckpt", agent)
    finally:
        if curve_path is not None:
            curve.write_csv(curve_path)
    return agent, curve


def evaluate(agent: Agent, env, episodes: int = 1, deterministic: bool = True, rng=None):
    """Run full episodes; returns a list of dicts with return, length and the last info."""
    rng = rng or np.random.default_rng(0)
    out = []
    for _ in range(episodes):
        obs = env.reset()
        total, length, info = 0.0, 0, {}
        collisions = 0
        while True:
            if deterministic:
                act = agent.deterministic_action(obs)
            else:
                m = agent.mean(obs)
                act = agent.to_env_action(m + np.exp(agent.policy.log_std) * rng.standard_normal(m.shape))
            res = env.step(act)
            total += res.reward
            length += 1
            info = res.info
            collisions += int(bool(info.get("collision", False)))
            obs = res.observation
            if res.terminated or res.truncated:
                break
        out.append({"return": total, "length": length, "terminated": res.terminated,
                    "info": info, "collisions": collisions})
    return out


def config_field_names() -> list[str]:
    return [f.name for f in fields(PpoConfig)]
