"""Common reset/step lifecycle shared by every environment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import ContractViolation


@dataclass(frozen=True)
class SpaceSpec:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        if low.shape != high.shape or low.ndim != 1:
            raise ContractViolation("space bounds must be equal-length vectors")
        if np.any(low > high):
            raise ContractViolation("space lower bound exceeds upper bound")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dimension(self) -> int:
        return self.low.shape[0]

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return x.shape == self.low.shape and bool(np.all(x >= self.low) and np.all(x <= self.high))

    def clamp(self, x) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(x, dtype=np.float64), self.low), self.high)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict = field(default_factory=dict)


class Env:
    """Base class. Subclasses implement ``_reset`` and ``_transition``.

    ``step`` handles action clamping, the step counter, truncation at
    ``max_steps`` and the contract that a finished episode needs a reset.
    """

    env_id = "abstract"
    observation_space: SpaceSpec
    action_space: SpaceSpec
    max_steps: int

    def __init__(self):
        self.steps = 0
        self._needs_reset = True
        self._seed = None
        self.np_random = np.random.default_rng(0)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._seed = seed
            self.np_random = np.random.default_rng(seed)
        self.steps = 0
        self._needs_reset = False
        return self._reset()

    def step(self, action) -> StepResult:
        if self._needs_reset:
            raise ContractViolation(f"{self.env_id}: step() called before reset() or after episode end")
        raw = np.asarray(action, dtype=np.float64)
        if raw.shape != self.action_space.low.shape:
            raise ContractViolation(
                f"{self.env_id}: action shape {raw.shape} != {self.action_space.low.shape}")
        act = self.action_space.clamp(raw)
        clamped = bool(np.any(act != raw))
        obs, reward, terminated, info = self._transition(act)
        self.steps += 1
        truncated = (not terminated) and self.steps >= self.max_steps
        info["step"] = self.steps
        info["clamped"] = clamped
        if terminated or truncated:
            self._needs_reset = True
        return StepResult(obs, float(reward), bool(terminated), bool(truncated), info)

    def theoretical_max_return(self) -> float:
        raise NotImplementedError

    def _reset(self) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, action: np.ndarray):
        raise NotImplementedError
