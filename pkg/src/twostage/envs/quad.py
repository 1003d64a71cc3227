"""Kinematic quadruped planner: body point plus four feet, with foot heights
driven by a footfall schedule instead of the policy.

Leg order is FL, FR, HL, HR. World x points toward the goal, z is up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from .base import Env, SpaceSpec

LEGS = ("FL", "FR", "HL", "HR")
SWING_HEIGHT = 0.10
QUAD_TRAJECTORY_VERSION = 1
QUAD_TRAJECTORY_HEADER = "# twostage quadruped plan trajectory"


@dataclass(frozen=True)
class FootfallPattern:
    gait: str
    period: float
    offsets: tuple[float, float, float, float]
    duty_cycle: float

    def __post_init__(self):
        if not 0.0 < self.duty_cycle < 1.0:
            raise ValueError("duty_cycle must lie in (0, 1)")
        if self.period <= 0 or len(self.offsets) != 4 or not all(0 <= o < 1 for o in self.offsets):
            raise ValueError("invalid footfall pattern")

    @classmethod
    def trot(cls, period: float = 0.6) -> "FootfallPattern":
        # diagonal pairs FL+HR and FR+HL move together
        return cls("trot", period, (0.0, 0.5, 0.5, 0.0), 0.5)

    @classmethod
    def walk(cls, period: float = 1.0) -> "FootfallPattern":
        # lift order HL, FL, HR, FR
        return cls("walk", period, (0.25, 0.75, 0.0, 0.5), 0.75)

    @classmethod
    def named(cls, gait: str) -> "FootfallPattern":
        if gait == "trot":
            return cls.trot()
        if gait == "walk":
            return cls.walk()
        raise ValueError(f"unknown gait '{gait}'")


def contact_flag(pattern: FootfallPattern, leg: int, phase: float) -> bool:
    """True iff ``frac(phase - offset) < duty``. Evaluated in exact rationals
    so the scheduled contact count never depends on rounding."""
    d = (Fraction(phase) - Fraction(pattern.offsets[leg])) % 1
    return d < Fraction(pattern.duty_cycle)


def desired_foot_z(in_contact: bool) -> float:
    return 0.0 if in_contact else SWING_HEIGHT


GAIT_SPEEDS = {
    # base max speed (m/s), end-effector max angular speed (rad/s)
    "walk": (0.264, 1.65),
    "trot": (0.63, 1.26),
}


@dataclass(frozen=True)
class QuadPlanConfig:
    gait: str = "trot"
    dt: float = 0.1
    start: tuple[float, float] = (0.0, 0.0)
    goal: tuple[float, float] = (2.0, 0.0)
    com_height: float = 0.42
    base_max_speed: float | None = None
    ee_max_angular_speed: float | None = None
    leg_length: float = 0.25
    k_dist: float = -2.5
    k_com: float = -4.0
    k_ee_x: float = -20.0
    k_com_z: float = -20.0
    k_ns: float = -10.0
    k_ee_z: float = -20.0
    nominal_x: tuple[float, float, float, float] = (0.2, 0.2, -0.2, -0.2)
    nominal_y: tuple[float, float, float, float] = (0.12, -0.12, 0.12, -0.12)
    max_steps: int = 59
    goal_tolerance: float = 0.1
    min_com_height: float = 0.32

    def __post_init__(self):
        if self.gait not in GAIT_SPEEDS:
            raise ValueError(f"unknown gait '{self.gait}' (expected one of {sorted(GAIT_SPEEDS)})")
        base, ee = GAIT_SPEEDS[self.gait]
        if self.base_max_speed is None:
            object.__setattr__(self, "base_max_speed", base)
        if self.ee_max_angular_speed is None:
            object.__setattr__(self, "ee_max_angular_speed", ee)
        if self.dt <= 0 or self.base_max_speed <= 0 or self.ee_max_angular_speed <= 0:
            raise ValueError("dt and speed caps must be positive")

    @property
    def pattern(self) -> FootfallPattern:
        return FootfallPattern.named(self.gait)

    @property
    def body_step_cap(self) -> float:
        return self.base_max_speed * self.dt

    @property
    def ee_step_cap(self) -> float:
        return self.ee_max_angular_speed * self.leg_length * self.dt

    @property
    def start_distance(self) -> float:
        return math.hypot(self.goal[0] - self.start[0], self.goal[1] - self.start[1])


@dataclass
class QuadPlanState:
    body: np.ndarray  # (3,)
    feet: np.ndarray  # (4, 3)
    phase: float

    def copy(self) -> "QuadPlanState":
        return QuadPlanState(self.body.copy(), self.feet.copy(), self.phase)


def phase_at(step: int, config: QuadPlanConfig) -> float:
    # rounded so the schedule repeats exactly when period/dt is integral
    return round(step * config.dt / config.pattern.period, 12) % 1.0


def contacts_at(pattern: FootfallPattern, phase: float) -> tuple[bool, bool, bool, bool]:
    return tuple(contact_flag(pattern, j, phase) for j in range(4))


def initial_state(config: QuadPlanConfig) -> QuadPlanState:
    body = np.array([config.start[0], config.start[1], config.com_height])
    contacts = contacts_at(config.pattern, 0.0)
    feet = np.array([[body[0] + config.nominal_x[j], body[1] + config.nominal_y[j], desired_foot_z(contacts[j])]
                     for j in range(4)])
    return QuadPlanState(body, feet, 0.0)


def plan_reward_terms(state: QuadPlanState, config: QuadPlanConfig) -> dict[str, float]:
    body, feet = state.body, state.feet
    gx, gy = config.goal
    dist = math.hypot(body[0] - gx, body[1] - gy)
    cx, cy = feet[:, 0].mean(), feet[:, 1].mean()
    com_err = math.hypot(body[0] - cx, body[1] - cy)
    x_dev = sum(abs(feet[j, 0] - body[0] - config.nominal_x[j]) for j in range(4))
    return {
        "r_dist": math.exp(config.k_dist * dist),
        "r_com": math.exp(config.k_com * com_err),
        "r_x_pen": math.exp(config.k_ee_x * x_dev),
        "r_com_z": math.exp(config.k_com_z * abs(body[2] - config.com_height)),
    }


def plan_reward(state: QuadPlanState, config: QuadPlanConfig) -> float:
    t = plan_reward_terms(state, config)
    return t["r_dist"] * t["r_com"] * t["r_x_pen"] * t["r_com_z"]


def original_quad_reward(prev: QuadPlanState, curr: QuadPlanState, config: QuadPlanConfig,
                         contacts=None) -> tuple[float, dict[str, float]]:
    """Multiplicative reward of the full quadruped task, evaluated on two
    consecutive kinematic snapshots. ``contacts`` defaults to the schedule at
    ``curr.phase``."""
    if contacts is None:
        contacts = contacts_at(config.pattern, curr.phase)
    body, feet = curr.body, curr.feet
    slip = sum(float(contacts[j]) * float(np.linalg.norm(feet[j] - prev.feet[j])) for j in range(4))
    z_err = sum(abs(feet[j, 2] - desired_foot_z(contacts[j])) for j in range(4))
    cx, cy = feet[:, 0].mean(), feet[:, 1].mean()
    terms = {
        "r_dist": math.exp(config.k_dist * math.hypot(body[0] - config.goal[0], body[1] - config.goal[1])),
        "r_ns": math.exp(config.k_ns * slip),
        "r_ee_z": math.exp(config.k_ee_z * z_err),
        "r_com": math.exp(config.k_com * math.hypot(body[0] - cx, body[1] - cy)),
    }
    total = terms["r_dist"] * terms["r_ns"] * terms["r_ee_z"] * terms["r_com"]
    return total, terms


def quad_termination(state: QuadPlanState, steps: int, config: QuadPlanConfig) -> tuple[bool, bool, str | None]:
    """(terminated, truncated, reason), checked in a fixed order: goal
    reached, deviation beyond the starting distance, CoM too low, step limit."""
    dist = math.hypot(state.body[0] - config.goal[0], state.body[1] - config.goal[1])
    if dist <= config.goal_tolerance:
        return True, False, "goal"
    if dist > config.start_distance:
        return True, False, "deviation"
    if state.body[2] < config.min_com_height:
        return True, False, "com_height"
    if steps >= config.max_steps:
        return False, True, "max_steps"
    return False, False, None


class QuadPlanEnv(Env):
    env_id = "quad-plan"

    def __init__(self, config: QuadPlanConfig | None = None):
        super().__init__()
        self.config = config or QuadPlanConfig()
        self.pattern = self.config.pattern
        self.max_steps = self.config.max_steps
        bc, ec = self.config.body_step_cap, self.config.ee_step_cap
        self.action_space = SpaceSpec(np.array([-bc] * 3 + [-ec] * 8), np.array([bc] * 3 + [ec] * 8))
        d0 = self.config.start_distance
        gx, gy = self.config.goal
        r = d0 + 1.0
        low = [gx - r, gy - r, 0.0] + [-1.0, -1.0, -1.0] * 4 + [-1.0, -1.0, -r, -r, 0.0]
        high = [gx + r, gy + r, 1.5] + [1.0, 1.0, 0.5] * 4 + [1.0, 1.0, r, r, r]
        self.observation_space = SpaceSpec(np.array(low), np.array(high))
        self.state = initial_state(self.config)

    def _observation(self) -> np.ndarray:
        s = self.state
        rel = (s.feet - s.body).ravel()
        ang = 2.0 * math.pi * s.phase
        gx, gy = self.config.goal
        dx, dy = gx - s.body[0], gy - s.body[1]
        obs = np.concatenate([s.body, rel, [math.sin(ang), math.cos(ang), dx, dy, math.hypot(dx, dy)]])
        return np.clip(obs, self.observation_space.low, self.observation_space.high)

    def _reset(self):
        self.state = initial_state(self.config)
        return self._observation()

    def _transition(self, action):
        s = self.state
        s.body = s.body + action[:3]
        feet = s.feet.copy()
        feet[:, :2] += action[3:].reshape(4, 2)
        s.phase = phase_at(self.steps + 1, self.config)
        contacts = contacts_at(self.pattern, s.phase)
        for j in range(4):
            feet[j, 2] = desired_foot_z(contacts[j])
        s.feet = feet
        terms = plan_reward_terms(s, self.config)
        reward = terms["r_dist"] * terms["r_com"] * terms["r_x_pen"] * terms["r_com_z"]
        terminated, _, reason = quad_termination(s, self.steps + 1, self.config)
        info = {"contacts": contacts, "reason": reason, "terms": terms,
                "distance": math.hypot(s.body[0] - self.config.goal[0], s.body[1] - self.config.goal[1])}
        return self._observation(), reward, terminated, info

    def step(self, action):
        res = super().step(action)
        if res.truncated:
            res.info["reason"] = "max_steps"
        return res

    def theoretical_max_return(self) -> float:
        return 1.0 * self.max_steps


@dataclass
class QuadTrajectory:
    dt: float
    gait: str
    times: np.ndarray
    phases: np.ndarray
    body: np.ndarray  # (N, 3)
    feet: np.ndarray  # (N, 4, 3)
    contacts: np.ndarray  # (N, 4) bool
    warning: str | None = field(default=None, compare=False)

    def final_distance_to(self, goal) -> float:
        return float(math.hypot(self.body[-1, 0] - goal[0], self.body[-1, 1] - goal[1]))

    def __eq__(self, other):
        if not isinstance(other, QuadTrajectory):
            return NotImplemented
        return (self.dt == other.dt and self.gait == other.gait and all(
            np.array_equal(a, b) for a, b in ((self.times, other.times), (self.phases, other.phases),
                                             (self.body, other.body), (self.feet, other.feet),
                                             (self.contacts, other.contacts))))


def extract_quad_trajectory(policy: Callable[[np.ndarray], np.ndarray], env: QuadPlanEnv,
                            goal_threshold: float = 0.3) -> QuadTrajectory:
    obs = env.reset()
    states = [(0.0, env.state.copy(), contacts_at(env.pattern, env.state.phase))]
    while True:
        res = env.step(policy(obs))
        obs = res.observation
        states.append((env.steps * env.config.dt, env.state.copy(), res.info["contacts"]))
        if res.terminated or res.truncated:
            break
    traj = QuadTrajectory(
        env.config.dt, env.config.gait,
        np.array([t for t, _, _ in states]),
        np.array([s.phase for _, s, _ in states]),
        np.array([s.body for _, s, _ in states]),
        np.array([s.feet for _, s, _ in states]),
        np.array([c for _, _, c in states], dtype=bool))
    d = traj.final_distance_to(env.config.goal)
    if d > goal_threshold:
        traj.warning = f"plan ends {d:.3f} m from the goal (threshold {goal_threshold} m)"
    return traj


def save_quad_trajectory(traj: QuadTrajectory, path) -> None:
    cols = ["t", "phase", "bx", "by", "bz"] + [f"e{j}{a}" for j in range(4) for a in "xyz"] + \
        [f"c{j}" for j in range(4)]
    lines = [QUAD_TRAJECTORY_HEADER, f"version,{QUAD_TRAJECTORY_VERSION}", f"dt,{traj.dt!r}",
             f"gait,{traj.gait}", ",".join(cols)]
    for i in range(len(traj.times)):
        vals = [traj.times[i], traj.phases[i], *traj.body[i], *traj.feet[i].ravel()]
        lines.append(",".join(repr(float(v)) for v in vals) + "," +
                     ",".join(str(int(c)) for c in traj.contacts[i]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_quad_trajectory(path) -> QuadTrajectory:
    from .rocket_plan import TrajectoryFormatError

    lines = Path(path).read_text().splitlines()
    if len(lines) < 5 or lines[0] != QUAD_TRAJECTORY_HEADER:
        raise TrajectoryFormatError(path, 1, "missing quad trajectory header")
    if lines[1] != f"version,{QUAD_TRAJECTORY_VERSION}":
        raise TrajectoryFormatError(path, 2, "unsupported version")
    try:
        dt = float(lines[2].split(",")[1])
    except (IndexError, ValueError):
        raise TrajectoryFormatError(path, 3, "bad dt record") from None
    gait = lines[3].split(",")[1]
    rows = []
    for lineno, line in enumerate(lines[5:], start=6):
        f = line.split(",")
        if len(f) != 21:
            raise TrajectoryFormatError(path, lineno, f"expected 21 fields, got {len(f)}")
        try:
            rows.append([float(v) for v in f[:17]] + [int(v) for v in f[17:]])
        except ValueError as exc:
            raise TrajectoryFormatError(path, lineno, str(exc)) from None
        if len(rows) > 1 and rows[-1][0] <= rows[-2][0]:
            raise TrajectoryFormatError(path, lineno, "times are not strictly increasing")
    if len(rows) < 2:
        raise TrajectoryFormatError(path, len(lines), "a trajectory needs at least 2 states")
    num = np.array([r[:17] for r in rows], dtype=np.float64)
    return QuadTrajectory(dt, gait, num[:, 0], num[:, 1], num[:, 2:5].copy(),
                          num[:, 5:17].reshape(-1, 4, 3).copy(),
                          np.array([r[17:] for r in rows], dtype=bool))
