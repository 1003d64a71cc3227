"""Push-recovery evaluation of a rocket policy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import RobustnessConfig
from .envs.rocket import RocketEnv
from .envs.rocket_imitate import RocketImitationEnv
from .ppo import Agent

REPORT_COLUMNS = ("magnitude", "trial", "direction", "onset_step", "duration_steps", "velocity_kick",
                  "success", "final_distance", "min_distance", "max_tracking_error", "left_bounds")


@dataclass(frozen=True)
class TrialResult:
    magnitude: float
    trial: int
    direction: float
    onset_step: int
    duration_steps: int
    velocity_kick: float
    success: bool
    final_distance: float
    min_distance: float
    max_tracking_error: float
    left_bounds: bool


@dataclass
class RobustnessReport:
    rows: list[TrialResult]

    def success_rate(self, magnitude: float) -> float:
        hits = [r.success for r in self.rows if r.magnitude == magnitude]
        if not hits:
            raise KeyError(f"no trials at magnitude {magnitude}")
        return sum(hits) / len(hits)

    @property
    def magnitudes(self) -> list[float]:
        return sorted({r.magnitude for r in self.rows})

    def monotone(self) -> bool:
        """True when success never rises with push strength (reported, not enforced)."""
        rates = [self.success_rate(m) for m in self.magnitudes]
        return all(a >= b for a, b in zip(rates, rates[1:]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else int(v) if isinstance(v, bool) else v
                            for v in (getattr(r, c) for c in REPORT_COLUMNS)])


def _episode(agent: Agent, env: RocketEnv, radius: float):
    obs = env.reset()
    min_d, max_err, left = math.inf, 0.0, False
    while True:
        res = env.step(agent.deterministic_action(obs))
        obs = res.observation
        min_d = min(min_d, res.info["distance"])
        max_err = max(max_err, res.info.get("tracking_error", 0.0))
        left = left or res.info["out_of_bounds"]
        if res.terminated or res.truncated:
            break
    final = res.info["distance"]
    return final <= radius and not left, final, min_d, max_err, left


def eval_robustness(agent: Agent, env: RocketEnv, suite: RobustnessConfig, seed: int = 0) -> RobustnessReport:
    """Apply one push per trial: fixed magnitude and duration, random direction
    and onset step. Success means the episode ends within
    ``suite.success_radius`` of the goal and never leaves the arena.

    ``env`` should start from the fixed start; for an imitation env any
    reference-state initialization is switched off here.
    """
    if isinstance(env, RocketImitationEnv) and env.imitation.random_start_prob > 0:
        env = RocketImitationEnv(env.reference, env.config, replace(env.imitation, random_start_prob=0.0))
    dt = env.config.dt
    dur = int(round(suite.duration / dt))
    rng = np.random.default_rng(seed)
    rows = []
    for mag in suite.magnitudes:
        for trial in range(suite.trials):
            angle = float(rng.uniform(-math.pi, math.pi))
            onset = int(rng.integers(suite.earliest_step, suite.latest_step + 1))
            force = (mag * math.cos(angle), mag * math.sin(angle))
            env.schedule_perturbation(force, onset, dur)
            try:
                ok, final, min_d, max_err, left = _episode(agent, env, suite.success_radius)
            finally:
                env.clear_perturbation()
            rows.append(TrialResult(float(mag), trial, angle, onset, dur, mag * dur * dt / env.config.mass,
                                    ok, final, min_d, max_err, left))
    return RobustnessReport(rows)


def unperturbed_success(agent: Agent, env: RocketEnv, radius: float = 2.0) -> bool:
    """The deterministic policy on the fixed start without pushes."""
    env.clear_perturbation()
    return _episode(agent, env, radius)[0]
