"""Two-stage and baseline experiment runners, rollout dumps and manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ExperimentConfig, dump_config
from .envs import make_env
from .envs.quad import QuadPlanEnv, extract_quad_trajectory, save_quad_trajectory
from .envs.rocket import RocketEnv
from .envs.rocket_imitate import RocketImitationEnv, densify
from .envs.rocket_plan import ReferenceTrajectory, RocketPlanEnv, extract_trajectory, save_trajectory
from .errors import ConfigError, OutOfScopeError, StageGateError
from .plotting import CurveSeries, normalize_and_merge_curves, write_merged_csv, write_svg
from .ppo import Agent, LearningCurve, PpoConfig, save_agent, train

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
ROCKET_ROLLOUT_COLUMNS = ("t", "x", "y", "theta", "vx", "vy", "omega", "reward", "collision")
TRACKING_COLUMNS = ("t", "x", "y", "xbar", "ybar", "err", "reward", "collision")

Log = Callable[[str], None]


# --- manifest -----------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files: list[str], info: dict) -> str:
    """Record every written file with its sha256; returns the manifest's own hash."""
    out_dir = Path(out_dir)
    entries = [{"path": f, "sha256": sha256_file(out_dir / f), "bytes": (out_dir / f).stat().st_size}
               for f in sorted(set(files))]
    doc = {"version": MANIFEST_VERSION, "files": entries, "info": info}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    (out_dir / MANIFEST_NAME).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def manifest_hash(out_dir) -> str:
    return sha256_file(Path(out_dir) / MANIFEST_NAME)


def verify_manifest(out_dir) -> list[str]:
    """Re-hash every listed file; returns a list of problems (empty when clean)."""
    out_dir = Path(out_dir)
    path = out_dir / MANIFEST_NAME
    if not path.is_file():
        return [f"{path}: missing"]
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        return [f"{path}: not valid JSON ({exc})"]
    if doc.get("version") != MANIFEST_VERSION:
        return [f"{path}: unsupported manifest version {doc.get('version')}"]
    problems = []
    for e in doc.get("files", []):
        f = out_dir / e["path"]
        if not f.is_file():
            problems.append(f"{e['path']}: missing")
        elif sha256_file(f) != e["sha256"]:
            problems.append(f"{e['path']}: hash mismatch")
    return problems


# --- rollouts -----------------------------------------------------------------

@dataclass
class RolloutSummary:
    steps: int
    total_return: float
    final_distance: float
    min_distance: float
    collisions: int
    out_of_bounds: bool
    mean_tracking_error: float = float("nan")
    max_tracking_error: float = float("nan")

    def as_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in self.__dict__.items()}


def rocket_rollout(policy: Callable[[np.ndarray], np.ndarray], env: RocketEnv, path=None) -> RolloutSummary:
    """Deterministic episode on a full-dynamics rocket env. Writes the state
    dump (or, for the imitation env, the tracking dump) when ``path`` is given."""
    tracking = isinstance(env, RocketImitationEnv)
    obs = env.reset()
    rows = []
    total, collisions, min_d, errs = 0.0, 0, math.inf, []
    oob = False
    while True:
        res = env.step(policy(obs))
        obs = res.observation
        info = res.info
        s = env.state
        total += res.reward
        collisions += int(info["collision"])
        min_d = min(min_d, info["distance"])
        oob = oob or info["out_of_bounds"]
        t = env.steps * env.config.dt
        if tracking:
            errs.append(info["tracking_error"])
            xb, yb = info["reference_xy"]
            rows.append((t, s.x, s.y, xb, yb, info["tracking_error"], res.reward, int(info["collision"])))
        else:
            rows.append((t, s.x, s.y, s.theta, s.vx, s.vy, s.omega, res.reward, int(info["collision"])))
        if res.terminated or res.truncated:
            break
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACKING_COLUMNS if tracking else ROCKET_ROLLOUT_COLUMNS)
            for r in rows:
                w.writerow([v if isinstance(v, int) else repr(float(v)) for v in r])
    summary = RolloutSummary(env.steps, total, info["distance"], min_d, collisions, oob)
    if errs:
        summary.mean_tracking_error = float(np.mean(errs))
        summary.max_tracking_error = float(np.max(errs))
    return summary


def obstacle_clearance(traj: ReferenceTrajectory, world, spacing: float = 0.025) -> list[float]:
    """Minimum distance from the (densified) reference path to each obstacle centre."""
    pts = densify(np.asarray(traj.positions, dtype=np.float64), spacing)
    return [float(np.min(np.hypot(pts[:, 0] - ox, pts[:, 1] - oy)))
            for ox, oy in (world.obstacle_1, world.obstacle_2)]


# --- runners ------------------------------------------------------------------

def _stage_ppo(ppo: PpoConfig, steps: int) -> PpoConfig:
    if steps % ppo.num_workers:
        raise ConfigError(f"stage budget {steps} is not a multiple of num_workers={ppo.num_workers}")
    cfg = replace(ppo, total_env_steps=steps)
    cfg.validate()
    return cfg


def _quiet(_msg: str) -> None:
    pass


@dataclass
class PipelineResult:
    out_dir: Path
    manifest_hash: str
    planner: Agent
    plan_curve: LearningCurve
    reference: object
    imitator: Agent | None = None
    imitate_curve: LearningCurve | None = None
    summary: dict | None = None


def train_planner(cfg: ExperimentConfig, seed: int, out_dir, log: Log = print,
                  steps: int | None = None) -> PipelineResult:
    """Stage 1 only: train the planner, extract and save the plan, write a manifest.

    Raises StageGateError (after writing the manifest) when the extracted plan
    ends farther than ``experiment.gate_distance`` from the goal.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    e = cfg.experiment
    budget = steps or e.planning_steps
    ppo = _stage_ppo(cfg.ppo_plan, budget)
    if e.task == "rocket":
        def factory(_w):
            return RocketPlanEnv(cfg.world, cfg.plan)
    else:
        def factory(_w):
            return QuadPlanEnv(cfg.quad)
    log(f"[plan] {factory(0).env_id} seed={seed} steps={budget}")
    agent, curve = train(factory, ppo, seed, log=log, curve_path=out / "plan_curve.csv")
    save_agent(out / "planner.ckpt", agent)
    files = ["config.ini", "plan_curve.csv", "planner.ckpt"]
    (out / "config.ini").write_text(dump_config(cfg))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if e.task == "rocket":
            eval_env = RocketPlanEnv(cfg.world, replace(cfg.plan, random_start_prob=0.0))
            ref = extract_trajectory(agent.deterministic_action, eval_env, e.gate_distance)
            save_trajectory(ref, out / "reference.csv")
            files.append("reference.csv")
            final = ref.final_distance
            gate = {"final_distance": final, "threshold": e.gate_distance, "states": len(ref)}
            if cfg.world.obstacles_enabled:
                gate["clearance"] = obstacle_clearance(ref, cfg.world)
                gate["plan_collisions"] = int(sum(cfg.world.collides(x, y) for x, y in ref.positions))
        else:
            ref = extract_quad_trajectory(agent.deterministic_action, QuadPlanEnv(cfg.quad), e.gate_distance)
            save_quad_trajectory(ref, out / "quad_plan.csv")
            files.append("quad_plan.csv")
            final = ref.final_distance_to(cfg.quad.goal)
            gate = {"final_distance": final, "threshold": e.gate_distance, "states": len(ref.times)}
    gate["passed"] = bool(final < e.gate_distance)
    info = {"stage": "plan", "seed": seed, "plan_steps": curve.points[-1].env_steps if curve.points else 0,
            "gate": gate, "final_normalized_return": _num(curve.final_normalized)}
    mh = write_manifest(out, files, info)
    log(f"[plan] final distance {final:.3f} m (gate {e.gate_distance} m) manifest {mh[:16]}")
    result = PipelineResult(out, mh, agent, curve, ref, summary=info)
    if not gate["passed"]:
        raise StageGateError(f"plan ends {final:.3f} m from the goal, gate is {e.gate_distance} m; "
                             f"not imitating it (artifacts in {out})")
    return result


def _num(v: float):
    return v if math.isfinite(v) else None


def train_imitator(cfg: ExperimentConfig, reference: ReferenceTrajectory, seed: int, out_dir,
                   log: Log = print, steps: int | None = None, files: list[str] | None = None,
                   info: dict | None = None):
    """Stage 2: train the tracking policy for ``reference`` and evaluate it."""
    if cfg.experiment.task != "rocket":
        raise OutOfScopeError("quadruped imitation needs articulated physics, which is out of scope")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    budget = steps or cfg.experiment.imitation_steps
    ppo = _stage_ppo(cfg.ppo_imitate, budget)

    def factory(_w):
        return RocketImitationEnv(reference, cfg.world, cfg.imitation)

    log(f"[imitate] rocket-imitate seed={seed} steps={budget} reference states={len(reference)}")
    # stage-2 seed stream is kept distinct from stage 1
    agent, curve = train(factory, ppo, seed + 1_000_003, log=log, curve_path=out / "imitate_curve.csv")
    save_agent(out / "imitator.ckpt", agent)
    eval_env = RocketImitationEnv(reference, cfg.world, replace(cfg.imitation, random_start_prob=0.0))
    summary = rocket_rollout(agent.deterministic_action, eval_env, out / "imitate_rollout.csv")
    files = list(files or []) + ["imitate_curve.csv", "imitator.ckpt", "imitate_rollout.csv"]
    if not (out / "config.ini").exists():
        (out / "config.ini").write_text(dump_config(cfg))
        files.append("config.ini")
    info = dict(info or {})
    info.update({"stage": "imitate", "seed": seed,
                 "imitate_steps": curve.points[-1].env_steps if curve.points else 0,
                 "evaluation": summary.as_dict(),
                 "final_normalized_return": _num(curve.final_normalized)})
    mh = write_manifest(out, files, info)
    log(f"[imitate] final distance {summary.final_distance:.3f} m, collisions {summary.collisions}, "
        f"mean tracking error {summary.mean_tracking_error:.3f} m, manifest {mh[:16]}")
    return agent, curve, summary, mh


def run_two_stage(cfg: ExperimentConfig, seed: int, out_dir, log: Log = print,
                  steps: int | None = None) -> PipelineResult:
    """Plan, gate, imitate, then write merged curves, plot and the manifest."""
    if cfg.experiment.task != "rocket":
        raise OutOfScopeError("the quadruped pipeline stops after planning (imitation needs articulated "
                              "physics); use train-plan for the quad planner")
    out = Path(out_dir)
    res = train_planner(cfg, seed, out, log, steps)
    plan_info = res.summary
    files = ["config.ini", "plan_curve.csv", "planner.ckpt", "reference.csv"]
    agent, curve, summary, _ = train_imitator(cfg, res.reference, seed, out, log, steps, files)

    plan_env = RocketPlanEnv(cfg.world, cfg.plan)
    imi_env = RocketImitationEnv(res.reference, cfg.world, cfg.imitation)
    rows = normalize_and_merge_curves([
        CurveSeries("planning", res.plan_curve, plan_env.theoretical_max_return()),
        CurveSeries("imitation", curve, imi_env.theoretical_max_return())])
    write_merged_csv(rows, out / "curves.csv")
    write_svg(rows, out / "curves.svg", "two-stage learning curves (normalized)")
    files += ["imitate_curve.csv", "imitator.ckpt", "imitate_rollout.csv", "curves.csv", "curves.svg"]
    info = {"stage": "pipeline", "seed": seed,
            "plan_steps": res.plan_curve.points[-1].env_steps, "imitate_steps": curve.points[-1].env_steps,
            "gate": plan_info["gate"], "evaluation": summary.as_dict(),
            "plan_final_normalized_return": _num(res.plan_curve.final_normalized),
            "imitate_final_normalized_return": _num(curve.final_normalized)}
    mh = write_manifest(out, files, info)
    log(f"[pipeline] seed {seed} done, manifest {mh}")
    return PipelineResult(out, mh, res.planner, res.plan_curve, res.reference, agent, curve, info)


def run_baseline(cfg: ExperimentConfig, seed: int, out_dir, log: Log = print, steps: int | None = None,
                 env_id: str = "rocket-full"):
    """Monolithic PPO on the original MDP with the combined budget."""
    if cfg.experiment.task == "quad" or env_id == "quad-full":
        raise OutOfScopeError("a quadruped baseline needs articulated physics, which is out of scope")
    if env_id != "rocket-full":
        make_env(env_id)  # unknown ids raise here
        raise ConfigError(f"baseline runs on rocket-full, not {env_id}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    budget = steps or cfg.experiment.effective_baseline_steps
    ppo = _stage_ppo(cfg.ppo_baseline, budget)

    def factory(_w):
        return RocketEnv(cfg.world)

    log(f"[baseline] rocket-full seed={seed} steps={budget}")
    agent, curve = train(factory, ppo, seed + 2_000_003, log=log, curve_path=out / "baseline_curve.csv")
    save_agent(out / "baseline.ckpt", agent)
    summary = rocket_rollout(agent.deterministic_action, RocketEnv(cfg.world), out / "baseline_rollout.csv")
    (out / "config.ini").write_text(dump_config(cfg))
    info = {"stage": "baseline", "seed": seed, "baseline_steps": curve.points[-1].env_steps,
            "evaluation": summary.as_dict(), "final_normalized_return": _num(curve.final_normalized)}
    mh = write_manifest(out, ["config.ini", "baseline_curve.csv", "baseline.ckpt", "baseline_rollout.csv"], info)
    log(f"[baseline] final distance {summary.final_distance:.3f} m, min distance {summary.min_distance:.3f} m, "
        f"manifest {mh[:16]}")
    return agent, curve, summary, mh
