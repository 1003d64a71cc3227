"""Seeded random hyperparameter search over PPO settings."""

from __future__ import annotations

import csv
import math
import traceback
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .config import SearchConfig
from .ppo import PpoConfig, train

# keys sampled log-uniformly from a (low, high) pair; the rest are categorical
LOG_UNIFORM_KEYS = ("learning_rate", "entropy_coef")
CATEGORICAL_KEYS = ("clip_epsilon", "minibatch_size", "gae_lambda")
TABLE_COLUMNS = ("rank", "trial", "status", "final_normalized_return", *LOG_UNIFORM_KEYS, *CATEGORICAL_KEYS,
                 "error")


@dataclass
class TrialRecord:
    trial: int
    params: dict
    status: str
    final_normalized_return: float
    error: str = ""


def sample_params(space: SearchConfig, rng: np.random.Generator) -> dict:
    out = {}
    for key in LOG_UNIFORM_KEYS:
        lo, hi = getattr(space, key)
        if lo <= 0 or hi <= 0:
            raise ValueError(f"log-uniform range for {key} must be positive")
        out[key] = float(math.exp(rng.uniform(math.log(lo), math.log(hi)))) if lo != hi else float(lo)
    for key in CATEGORICAL_KEYS:
        choices = getattr(space, key)
        out[key] = choices[int(rng.integers(len(choices)))]
    return out


def random_search(env_factory: Callable[[int], object], base: PpoConfig, space: SearchConfig, seed: int,
                  n_trials: int | None = None, steps_per_trial: int | None = None,
                  log: Callable[[str], None] | None = print) -> list[TrialRecord]:
    """Sample ``n_trials`` configs from one master seed, train each for a short
    budget and rank by final normalized return (failed trials rank last)."""
    n_trials = space.trials if n_trials is None else n_trials
    steps = space.steps_per_trial if steps_per_trial is None else steps_per_trial
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    steps -= steps % base.num_workers
    rng = np.random.default_rng(seed)
    trial_seeds = np.random.SeedSequence(seed).spawn(n_trials)
    records = []
    for i in range(n_trials):
        params = sample_params(space, rng)
        cfg = replace(base, total_env_steps=max(steps, base.num_workers), **params)
        try:
            _, curve = train(env_factory, cfg, int(trial_seeds[i].generate_state(1)[0]), log=None)
            score = curve.final_normalized
            rec = TrialRecord(i, params, "ok" if math.isfinite(score) else "no-episodes", score)
        except Exception as exc:  # a crashed trial is recorded and the search moves on
            rec = TrialRecord(i, params, "failed", float("nan"),
                              f"{type(exc).__name__}: {exc}".replace("\n", " "))
            if log is not None:
                log(traceback.format_exc().rstrip())
        records.append(rec)
        if log is not None:
            log(f"trial {i}: {rec.status} score {rec.final_normalized_return:.5g} {params}")
    return rank_trials(records)


def rank_trials(records: list[TrialRecord]) -> list[TrialRecord]:
    def key(r):
        s = r.final_normalized_return
        return (0, -s, r.trial) if math.isfinite(s) else (1, 0.0, r.trial)
    return sorted(records, key=key)


def write_table(records: list[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for rank, r in enumerate(records, start=1):
            w.writerow([rank, r.trial, r.status, repr(r.final_normalized_return),
                        *(repr(r.params[k]) if isinstance(r.params[k], float) else r.params[k]
                          for k in (*LOG_UNIFORM_KEYS, *CATEGORICAL_KEYS)), r.error])
