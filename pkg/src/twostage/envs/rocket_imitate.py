"""Imitation MDP: full rocket dynamics, reward replaced by path tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from ..errors import ConfigError
from .rocket import RocketEnv, RocketWorldConfig, sparse_reward
from .rocket_plan import ReferenceTrajectory


@dataclass(frozen=True)
class ImitationConfig:
    k_imi: float = -0.625
    collision_penalty: float = 0.2
    progress_window: int = 25
    densify_spacing: float = 0.025
    # training-only reference state initialization: probability that reset()
    # starts the rocket at rest on a random reference state
    random_start_prob: float = 0.0

    def __post_init__(self):
        if self.k_imi >= 0:
            raise ValueError("k_imi must be negative")
        if self.collision_penalty < 0:
            raise ValueError("collision_penalty must be non-negative")
        if self.progress_window < 1 or self.densify_spacing <= 0:
            raise ValueError("progress_window and densify_spacing must be positive")
        if not 0.0 <= self.random_start_prob <= 1.0:
            raise ValueError("random_start_prob must be in [0, 1]")


def densify(positions: np.ndarray, spacing: float, return_vertex_ids: bool = False):
    """Linear interpolation so consecutive points are at most ``spacing`` apart.

    Original vertices are kept exactly; repeated vertices collapse. With
    ``return_vertex_ids`` also returns, per input vertex, its index in the
    densified array.
    """
    pts = [positions[0]]
    ids = [0]
    for p0, p1 in zip(positions[:-1], positions[1:]):
        seg = p1 - p0
        length = math.hypot(seg[0], seg[1])
        if length == 0.0:
            ids.append(len(pts) - 1)
            continue
        n = math.ceil(length / spacing)
        for k in range(1, n):
            pts.append(p0 + seg * (k / n))
        pts.append(p1)
        ids.append(len(pts) - 1)
    out = np.array(pts, dtype=np.float64)
    if return_vertex_ids:
        return out, np.array(ids)
    return out


class ReferenceIndex:
    """Densified reference path with monotone-progress nearest-point lookup.

    The point array is immutable and may be shared; ``last`` is the
    per-episode progress state.
    """

    def __init__(self, traj: ReferenceTrajectory, world: RocketWorldConfig, spacing: float = 0.025,
                 window: int | None = 25):
        self.points, self.vertex_ids = densify(np.asarray(traj.positions, dtype=np.float64), spacing,
                                               return_vertex_ids=True)
        self.px = np.ascontiguousarray(self.points[:, 0])
        self.py = np.ascontiguousarray(self.points[:, 1])
        self.rewards = np.array([sparse_reward(p, world) for p in self.points])
        self.window = window
        self.last = 0

    def __len__(self):
        return len(self.points)

    def reset(self) -> None:
        self.last = 0

    def nearest(self, x: float, y: float) -> tuple[int, float]:
        """Closest point id in ``[last, last + window]`` and its distance.

        Advances ``last``. ``window=None`` searches the whole path.
        """
        if self.window is None:
            lo, hi = 0, len(self.points) - 1
        else:
            lo, hi = self.last, min(self.last + self.window, len(self.points) - 1)
        idx, dist = kernels.nearest_in_window(self.px, self.py, float(x), float(y), lo, hi)
        if self.window is not None:
            self.last = idx
        return idx, dist


def nearest_reference_point(x, index: ReferenceIndex):
    """Return ``(xbar, R(sbar), point_id)`` for the query position."""
    idx, _ = index.nearest(x[0], x[1])
    return index.points[idx].copy(), float(index.rewards[idx]), idx


def imitation_reward(x, collision: bool, index: ReferenceIndex, config: ImitationConfig) -> float:
    xbar, r_ref, _ = nearest_reference_point(x, index)
    err = math.hypot(x[0] - xbar[0], x[1] - xbar[1])
    return math.exp(config.k_imi * err) * r_ref - config.collision_penalty * float(collision)


class RocketImitationEnv(RocketEnv):
    """Same dynamics, observation and termination as ``RocketEnv``."""

    env_id = "rocket-imitate"

    def __init__(self, reference: ReferenceTrajectory, config: RocketWorldConfig | None = None,
                 imitation: ImitationConfig | None = None):
        super().__init__(config)
        self.imitation = imitation or ImitationConfig()
        if reference.layout != self.config.layout_hash():
            raise ConfigError("reference trajectory was planned for a different goal/obstacle layout")
        reference.validate()
        self.reference = reference
        self.index = ReferenceIndex(reference, self.config, self.imitation.densify_spacing,
                                    self.imitation.progress_window)
        if float(self.index.rewards.max()) <= 0.0:
            raise ConfigError("reference trajectory never earns a positive reward")
        self._err_sum = 0.0

    def _reset(self):
        self.index.reset()
        self._err_sum = 0.0
        obs = super()._reset()
        if self.imitation.random_start_prob > 0 and self.np_random.random() < self.imitation.random_start_prob:
            k = int(self.np_random.integers(len(self.reference)))
            x, y = self.reference.positions[k]
            self._state = (float(x), float(y), float(self.reference.headings[k]), 0.0, 0.0, 0.0)
            self.index.last = int(self.index.vertex_ids[k])
            obs = self._observation()
        return obs

    def fixed_start(self) -> "RocketImitationEnv":
        """Copy of this env that always starts at the configured start."""
        return RocketImitationEnv(self.reference, self.config, replace(self.imitation, random_start_prob=0.0))

    def _reward(self, info) -> float:
        x, y = info["position"]
        idx, err = self.index.nearest(x, y)
        self._err_sum += err
        info["tracking_error"] = err
        info["mean_tracking_error"] = self._err_sum / (self.steps + 1)
        info["reference_point"] = idx
        info["reference_xy"] = (float(self.index.px[idx]), float(self.index.py[idx]))
        return (math.exp(self.imitation.k_imi * err) * float(self.index.rewards[idx])
                - self.imitation.collision_penalty * float(info["collision"]))

    def theoretical_max_return(self) -> float:
        return float(self.index.rewards.max()) * self.max_steps
