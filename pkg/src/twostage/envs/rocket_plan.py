"""Kinematic planning MDP for the rocket and the reference-trajectory file."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .base import Env, SpaceSpec
from .rocket import POSITION_MARGIN, RocketWorldConfig, goal_features, sparse_reward, wrap_angle

TRAJECTORY_VERSION = 1
TRAJECTORY_HEADER = "# twostage rocket reference trajectory"


class TrajectoryFormatError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class RocketPlanConfig:
    max_delta_position: float = 0.5
    max_delta_heading_deg: float = 0.05
    dt: float = 0.05
    max_steps: int = 200
    # 0 disables goal-arrival termination
    arrival_radius: float = 0.0
    # training-only exploring starts: probability that reset() draws a
    # collision-free start uniformly inside the arena instead of the fixed one
    random_start_prob: float = 0.0
    random_start_margin: float = 1.0

    def __post_init__(self):
        if self.max_delta_position <= 0 or self.max_delta_heading_deg < 0 or self.dt <= 0:
            raise ValueError("step caps and dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.random_start_prob <= 1.0:
            raise ValueError("random_start_prob must be in [0, 1]")

    @property
    def max_delta_heading(self) -> float:
        return math.radians(self.max_delta_heading_deg)


class RocketPlanEnv(Env):
    """Stage-1 MDP: observation is the velocity-free subset of the rocket
    observation, actions are bounded deltas of (x, y, heading) and the
    transition is plain addition. Reward is the unmodified sparse reward."""

    env_id = "rocket-plan"

    def __init__(self, world: RocketWorldConfig | None = None, plan: RocketPlanConfig | None = None):
        super().__init__()
        self.world = world or RocketWorldConfig()
        self.plan = plan or RocketPlanConfig()
        self.max_steps = self.plan.max_steps
        dp, dh = self.plan.max_delta_position, self.plan.max_delta_heading
        self.action_space = SpaceSpec(np.array([-dp, -dp, -dh]), np.array([dp, dp, dh]))
        m = POSITION_MARGIN
        x0, x1 = self.world.arena_x[0] - m, self.world.arena_x[1] + m
        y0, y1 = self.world.arena_y[0] - m, self.world.arena_y[1] + m
        gx, gy = self.world.goal
        self.observation_space = SpaceSpec(
            np.array([x0, y0, -math.pi, gx - x1, gy - y1, 0.0, -math.pi]),
            np.array([x1, y1, math.pi, gx - x0, gy - y0, math.hypot(x1 - x0, y1 - y0), math.pi]))
        self.x = self.y = self.theta = 0.0

    def _observation(self) -> np.ndarray:
        dx, dy, dist, dang = goal_features(self.x, self.y, self.theta, self.world.goal)
        return np.array([self.x, self.y, self.theta, dx, dy, dist, dang])

    def _reset(self):
        self.x, self.y = (float(v) for v in self.world.start)
        self.theta = 0.0
        if self.plan.random_start_prob > 0 and self.np_random.random() < self.plan.random_start_prob:
            self.x, self.y = self._sample_start()
        return self._observation()

    def _sample_start(self) -> tuple[float, float]:
        w, m = self.world, self.plan.random_start_margin
        while True:
            x = float(self.np_random.uniform(w.arena_x[0] + m, w.arena_x[1] - m))
            y = float(self.np_random.uniform(w.arena_y[0] + m, w.arena_y[1] - m))
            if not w.obstacles_enabled or all(
                    math.hypot(x - ox, y - oy) > w.obstacle_radius + m for ox, oy in (w.obstacle_1, w.obstacle_2)):
                return x, y

    def fixed_start(self) -> "RocketPlanEnv":
        """Copy of this env that always starts at the configured start."""
        return RocketPlanEnv(self.world, replace(self.plan, random_start_prob=0.0))

    def _transition(self, action):
        self.x += action[0]
        self.y += action[1]
        self.theta = wrap_angle(self.theta + action[2])
        w = self.world
        reward = sparse_reward((self.x, self.y), w)
        dist = math.hypot(w.goal[0] - self.x, w.goal[1] - self.y)
        out = not w.in_bounds(self.x, self.y)
        arrived = self.plan.arrival_radius > 0 and dist <= self.plan.arrival_radius
        info = {"distance": dist, "out_of_bounds": out, "arrived": arrived,
                "collision": w.collides(self.x, self.y), "position": (self.x, self.y)}
        return self._observation(), reward, out or arrived, info

    def theoretical_max_return(self) -> float:
        return self.world.w1 * self.max_steps


@dataclass
class ReferenceTrajectory:
    dt: float
    goal: tuple[float, float]
    layout: str
    times: np.ndarray
    positions: np.ndarray  # (N, 2)
    headings: np.ndarray
    rewards: np.ndarray
    warning: str | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.times)

    @property
    def final_distance(self) -> float:
        return float(math.hypot(self.goal[0] - self.positions[-1, 0], self.goal[1] - self.positions[-1, 1]))

    def validate(self) -> None:
        if len(self.times) < 2:
            raise ValueError("a reference trajectory needs at least 2 states")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("reference times must be strictly increasing")

    def __eq__(self, other):
        if not isinstance(other, ReferenceTrajectory):
            return NotImplemented
        return (self.dt == other.dt and tuple(self.goal) == tuple(other.goal)
                and self.layout == other.layout
                and all(np.array_equal(a, b) for a, b in (
                    (self.times, other.times), (self.positions, other.positions),
                    (self.headings, other.headings), (self.rewards, other.rewards))))


def extract_trajectory(policy: Callable[[np.ndarray], np.ndarray], env: RocketPlanEnv,
                       goal_threshold: float = 2.0) -> ReferenceTrajectory:
    """Roll out ``policy`` (a deterministic obs -> action map) from the fixed
    start and record every visited state with its sparse reward."""
    obs = env.reset()
    rows = [(0.0, env.x, env.y, env.theta, sparse_reward((env.x, env.y), env.world))]
    while True:
        res = env.step(policy(obs))
        obs = res.observation
        rows.append((env.steps * env.plan.dt, env.x, env.y, env.theta, res.reward))
        if res.terminated or res.truncated:
            break
    arr = np.array(rows)
    traj = ReferenceTrajectory(env.plan.dt, tuple(env.world.goal), env.world.layout_hash(),
                               arr[:, 0], arr[:, 1:3].copy(), arr[:, 3].copy(), arr[:, 4].copy())
    if traj.final_distance > goal_threshold:
        traj.warning = f"plan ends {traj.final_distance:.3f} m from the goal (threshold {goal_threshold} m)"
        warnings.warn(traj.warning, RuntimeWarning, stacklevel=2)
    return traj


def save_trajectory(traj: ReferenceTrajectory, path) -> None:
    traj.validate()
    lines = [TRAJECTORY_HEADER,
             f"version,{TRAJECTORY_VERSION}",
             f"dt,{traj.dt!r}",
             f"goal,{float(traj.goal[0])!r},{float(traj.goal[1])!r}",
             f"layout,{traj.layout}",
             "t,x,y,theta,R_ref"]
    for t, (x, y), th, r in zip(traj.times, traj.positions, traj.headings, traj.rewards):
        lines.append(f"{float(t)!r},{float(x)!r},{float(y)!r},{float(th)!r},{float(r)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _floats(path, lineno, fields, n):
    if len(fields) != n:
        raise TrajectoryFormatError(path, lineno, f"expected {n} fields, got {len(fields)}")
    try:
        vals = [float(f) for f in fields]
    except ValueError as exc:
        raise TrajectoryFormatError(path, lineno, str(exc)) from None
    if not all(math.isfinite(v) for v in vals):
        raise TrajectoryFormatError(path, lineno, "non-finite value")
    return vals


def load_trajectory(path) -> ReferenceTrajectory:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise TrajectoryFormatError(path, 1, "missing reference trajectory header")
    meta = {}
    expected = ["version", "dt", "goal", "layout"]
    for i, key in enumerate(expected, start=2):
        if i > len(lines):
            raise TrajectoryFormatError(path, i, "truncated header")
        fields = lines[i - 1].split(",")
        if fields[0] != key:
            raise TrajectoryFormatError(path, i, f"expected '{key}' record")
        meta[key] = fields[1:]
    if meta["version"] != [str(TRAJECTORY_VERSION)]:
        raise TrajectoryFormatError(path, 2, f"unsupported version {meta['version']}")
    dt = _floats(path, 3, meta["dt"], 1)[0]
    goal = tuple(_floats(path, 4, meta["goal"], 2))
    if len(lines) < 6 or lines[5] != "t,x,y,theta,R_ref":
        raise TrajectoryFormatError(path, 6, "missing column header")
    rows = []
    for lineno, line in enumerate(lines[6:], start=7):
        if not line.strip():
            continue
        row = _floats(path, lineno, line.split(","), 5)
        if rows:
            step = row[0] - rows[-1][0]
            if step <= 0:
                raise TrajectoryFormatError(path, lineno, "times are not strictly increasing")
            if abs(step - dt) > 1e-9:
                raise TrajectoryFormatError(path, lineno, f"time step {step!r} differs from dt {dt!r}")
        rows.append(row)
    if len(rows) < 2:
        raise TrajectoryFormatError(path, len(lines), "a reference trajectory needs at least 2 states")
    arr = np.array(rows)
    return ReferenceTrajectory(dt, goal, meta["layout"][0], arr[:, 0], arr[:, 1:3].copy(),
                               arr[:, 3].copy(), arr[:, 4].copy())
