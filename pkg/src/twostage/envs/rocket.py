"""Planar rocket with gravity, linear drag and dead-zone engines.

Conventions: heading 0 points along world +y, positive heading is
counter-clockwise, the main engine pushes along ``(-sin(theta), cos(theta))``
and the side engines apply a pure torque.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from .base import Env, SpaceSpec

wrap_angle = kernels.wrap_angle


@dataclass(frozen=True)
class RocketWorldConfig:
    gravity: float = -2.5
    drag_lambda: float = 2.5
    mass: float = 1.0
    moment_of_inertia: float = 1.0
    main_scale: float = 50.0
    side_scale: float = 10.0
    engine_threshold: float = 0.5
    dt: float = 1.0 / 50.0
    arena_x: tuple[float, float] = (-15.0, 15.0)
    arena_y: tuple[float, float] = (0.0, 30.0)
    start: tuple[float, float] = (0.0, 2.0)
    goal: tuple[float, float] = (0.0, 26.0)
    obstacle_1: tuple[float, float] = (-3.0, 14.0)
    obstacle_2: tuple[float, float] = (3.0, 14.0)
    obstacle_radius: float = 1.0
    obstacles_enabled: bool = True
    max_steps: int = 500
    w1: float = 0.9
    w2: float = 0.05
    w3: float = 0.05
    k1: float = -0.5
    k2: float = -0.5
    k3: float = -0.5

    def __post_init__(self):
        if self.dt <= 0 or self.mass <= 0 or self.moment_of_inertia <= 0:
            raise ValueError("dt, mass and moment_of_inertia must be positive")
        if self.obstacle_radius < 0:
            raise ValueError("obstacle_radius must be non-negative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @classmethod
    def no_obstacles(cls, **overrides) -> "RocketWorldConfig":
        """The simpler task: goal term only, with a sharper exponent."""
        base = dict(obstacles_enabled=False, k1=-1.0, w2=0.0, w3=0.0)
        base.update(overrides)
        return cls(**base)

    def in_bounds(self, x: float, y: float) -> bool:
        return self.arena_x[0] <= x <= self.arena_x[1] and self.arena_y[0] <= y <= self.arena_y[1]

    def collides(self, x: float, y: float) -> bool:
        if not self.obstacles_enabled:
            return False
        r = self.obstacle_radius
        for ox, oy in (self.obstacle_1, self.obstacle_2):
            if math.hypot(x - ox, y - oy) <= r:
                return True
        return False

    def layout_hash(self) -> str:
        """Short digest of goal + obstacle layout + reward shape, used to pair
        reference files with the world they were planned in."""
        parts = [self.goal, self.obstacles_enabled, self.obstacle_1, self.obstacle_2,
                 self.obstacle_radius, self.w1, self.w2, self.w3, self.k1, self.k2, self.k3]
        return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]

    def with_(self, **kw) -> "RocketWorldConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class RocketState:
    x: float
    y: float
    theta: float
    vx: float
    vy: float
    omega: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def decode_action(action, config: RocketWorldConfig = RocketWorldConfig()) -> tuple[float, float]:
    """Map a clamped action in [-1, 1]^2 to (main thrust, side torque).

    Both engines are off inside the dead zone ``|a| < engine_threshold``;
    the main engine only fires for positive commands.
    """
    a0 = min(max(float(action[0]), -1.0), 1.0)
    a1 = min(max(float(action[1]), -1.0), 1.0)
    thr = config.engine_threshold
    main = config.main_scale * a0 if a0 >= thr else 0.0
    side = config.side_scale * a1 if abs(a1) >= thr else 0.0
    return main, side


def dynamics_step(state: RocketState, main_thrust: float, side_magnitude: float,
                  perturbation_force=(0.0, 0.0),
                  config: RocketWorldConfig = RocketWorldConfig()) -> RocketState:
    return RocketState(*kernels.rocket_dynamics(
        state.x, state.y, state.theta, state.vx, state.vy, state.omega,
        main_thrust, side_magnitude, float(perturbation_force[0]), float(perturbation_force[1]),
        config.gravity, config.drag_lambda, config.mass, config.moment_of_inertia, config.dt))


def sparse_reward(position, config: RocketWorldConfig) -> float:
    x, y = float(position[0]), float(position[1])
    gx, gy = config.goal
    r = config.w1 * math.exp(config.k1 * math.hypot(x - gx, y - gy))
    if config.obstacles_enabled:
        o1x, o1y = config.obstacle_1
        o2x, o2y = config.obstacle_2
        r -= config.w2 * math.exp(config.k2 * math.hypot(x - o1x, y - o1y))
        r -= config.w3 * math.exp(config.k3 * math.hypot(x - o2x, y - o2y))
    return r


def goal_features(x: float, y: float, theta: float, goal) -> tuple[float, float, float, float]:
    """Relative goal, distance, and signed heading error to the goal bearing.

    The heading error is defined as 0 when the rocket sits on the goal.
    """
    dx = goal[0] - x
    dy = goal[1] - y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return dx, dy, 0.0, 0.0
    bearing = math.atan2(-dx, dy)
    return dx, dy, dist, wrap_angle(bearing - theta)


def observe(state: RocketState, config: RocketWorldConfig) -> np.ndarray:
    dx, dy, dist, dang = goal_features(state.x, state.y, state.theta, config.goal)
    return np.array([state.x, state.y, state.theta, state.vx, state.vy, state.omega,
                     dx, dy, dist, dang])


# Observation margins: the rocket can overshoot the arena by at most one
# step before termination; velocities are bounded by drag, angular velocity
# is clipped to the declared range.
POSITION_MARGIN = 5.0
MAX_SPEED_OBS = 25.0
MAX_OMEGA_OBS = 10.0


def rocket_observation_space(config: RocketWorldConfig) -> SpaceSpec:
    m = POSITION_MARGIN
    x0, x1 = config.arena_x[0] - m, config.arena_x[1] + m
    y0, y1 = config.arena_y[0] - m, config.arena_y[1] + m
    gx, gy = config.goal
    diag = math.hypot(x1 - x0, y1 - y0)
    low = [x0, y0, -math.pi, -MAX_SPEED_OBS, -MAX_SPEED_OBS, -MAX_OMEGA_OBS,
           gx - x1, gy - y1, 0.0, -math.pi]
    high = [x1, y1, math.pi, MAX_SPEED_OBS, MAX_SPEED_OBS, MAX_OMEGA_OBS,
            gx - x0, gy - y0, diag, math.pi]
    return SpaceSpec(np.array(low), np.array(high))


class RocketEnv(Env):
    """Original rocket MDP with the sparse exponential reward."""

    env_id = "rocket-full"

    def __init__(self, config: RocketWorldConfig | None = None):
        super().__init__()
        self.config = config or RocketWorldConfig()
        self.max_steps = self.config.max_steps
        self.observation_space = rocket_observation_space(self.config)
        self.action_space = SpaceSpec(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        self._perturbation = None
        self._teleport = None
        self._state = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    # -- perturbation hook -------------------------------------------------
    def schedule_perturbation(self, force, start_step: int, duration_steps: int) -> None:
        """Apply ``force`` (N, world frame) during steps
        ``start_step <= step < start_step + duration_steps`` of the next episode."""
        self._perturbation = ((float(force[0]), float(force[1])), int(start_step), int(duration_steps))

    def clear_perturbation(self) -> None:
        self._perturbation = None

    def teleport(self, x: float, y: float) -> None:
        """Debug mode: the next step places the rocket at rest at (x, y)
        instead of integrating the dynamics."""
        self._teleport = (float(x), float(y))

    def _force_now(self) -> tuple[float, float]:
        if self._perturbation is None:
            return 0.0, 0.0
        force, start, dur = self._perturbation
        if start <= self.steps < start + dur:
            return force
        return 0.0, 0.0

    # -- state ------------------------------------------------------------
    @property
    def state(self) -> RocketState:
        return RocketState(*self._state)

    def set_state(self, state: RocketState) -> None:
        self._state = (state.x, state.y, state.theta, state.vx, state.vy, state.omega)

    def _observation(self) -> np.ndarray:
        obs = observe(self.state, self.config)
        np.clip(obs[3:6], self.observation_space.low[3:6], self.observation_space.high[3:6], out=obs[3:6])
        return obs

    def _reset(self) -> np.ndarray:
        sx, sy = self.config.start
        self._state = (float(sx), float(sy), 0.0, 0.0, 0.0, 0.0)
        return self._observation()

    def _physics(self, action):
        cfg = self.config
        main, side = decode_action(action, cfg)
        fx, fy = self._force_now()
        if self._teleport is not None:
            self._state = (*self._teleport, self._state[2], 0.0, 0.0, 0.0)
            self._teleport = None
        else:
            self._state = kernels.rocket_dynamics(*self._state, main, side, fx, fy, cfg.gravity,
                                                  cfg.drag_lambda, cfg.mass, cfg.moment_of_inertia,
                                                  cfg.dt)
        x, y = self._state[0], self._state[1]
        info = {
            "collision": cfg.collides(x, y),
            "out_of_bounds": not cfg.in_bounds(x, y),
            "distance": math.hypot(cfg.goal[0] - x, cfg.goal[1] - y),
            "position": (x, y),
            "thrust": main,
            "torque": side,
            "perturbation": (fx, fy),
        }
        return info

    def _reward(self, info) -> float:
        return sparse_reward(info["position"], self.config)

    def _transition(self, action):
        info = self._physics(action)
        reward = self._reward(info)
        return self._observation(), reward, info["out_of_bounds"], info

    def theoretical_max_return(self) -> float:
        return self.config.w1 * self.max_steps
