"""Command-line entry point: ``twostage <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 stage-gate failure,
4 runtime fault.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import kernels
from .config import ExperimentConfig, load_config, preset_names
from .envs import ENV_IDS, OUT_OF_SCOPE_IDS, make_env
from .envs.rocket_plan import TrajectoryFormatError, load_trajectory
from .errors import ConfigError, StageGateError
from .plotting import (CurveSeries, normalize_and_merge_curves, read_merged_csv, write_merged_csv,
                       write_svg)
from .ppo import LearningCurve, load_agent

EXIT_OK, EXIT_CONFIG, EXIT_GATE, EXIT_RUNTIME = 0, 2, 3, 4
DEFAULT_PRESET = "rocket-no-obstacle"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, env_default: str | None = None) -> None:
    p.add_argument("--config", default=DEFAULT_PRESET,
                   help=f"INI file or bundled preset name ({', '.join(preset_names())})")
    p.add_argument("--seed", type=int, default=None, help="seed (default: every seed in the config)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--steps", type=int, default=None, help="override the stage budget")
    p.add_argument("--env", default=env_default, help=f"env id ({', '.join(ENV_IDS)})")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="twostage", description="Two-stage planning + imitation RL experiments.")
    ap.add_argument("--quiet", action="store_true", help="suppress per-update progress lines")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-plan", help="train the stage-1 planner and extract its plan")
    _common(p, None)
    p = sub.add_parser("train-imitate", help="train the stage-2 tracking policy for a reference file")
    _common(p, "rocket-imitate")
    p.add_argument("--reference", required=True, help="reference trajectory file")
    p = sub.add_parser("train-baseline", help="monolithic PPO on the original MDP")
    _common(p, "rocket-full")
    p = sub.add_parser("run-pipeline", help="planning, gate, imitation, curves and manifest")
    _common(p, None)
    p = sub.add_parser("rollout", help="deterministic rollout of a checkpoint, dumped as CSV")
    _common(p, None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reference", default=None, help="reference file (rocket-imitate only)")
    p = sub.add_parser("eval-robustness", help="push-recovery trials for a rocket policy")
    _common(p, "rocket-imitate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reference", default=None, help="reference file (rocket-imitate only)")
    p = sub.add_parser("plot", help="merge and plot learning-curve CSVs as SVG")
    p.add_argument("curves", nargs="*", help="curve CSVs in stage order; or use --run")
    p.add_argument("--run", default=None, help="pipeline output directory (uses its curves.csv)")
    p.add_argument("--max-return", type=float, action="append", default=None,
                   help="theoretical max return per curve, same order as the curves")
    p.add_argument("--labels", default=None, help="comma-separated stage labels")
    p.add_argument("--out", required=True, help="SVG output path")
    p = sub.add_parser("search", help="seeded random hyperparameter search")
    _common(p, None)
    p.add_argument("--trials", type=int, default=None)
    p = sub.add_parser("verify-manifest", help="re-hash every file listed in a run manifest")
    p.add_argument("run_dir")
    return ap


# --- helpers -------------------------------------------------------------------

def _planning_env_id(cfg: ExperimentConfig, env_id: str | None) -> str:
    expected = "rocket-plan" if cfg.experiment.task == "rocket" else "quad-plan"
    if env_id is None:
        return expected
    if env_id in OUT_OF_SCOPE_IDS:
        make_env(env_id)
    if env_id not in ("rocket-plan", "quad-plan"):
        raise ConfigError(f"--env {env_id} is not a planning env (rocket-plan or quad-plan)")
    if env_id != expected:
        raise ConfigError(f"--env {env_id} does not match the config's task '{cfg.experiment.task}'")
    return env_id


def _seeds(cfg: ExperimentConfig, seed: int | None) -> list[int]:
    return [seed] if seed is not None else list(cfg.experiment.seeds)


def _out(cfg: ExperimentConfig, args, name: str) -> Path:
    return Path(args.out) if args.out else Path(cfg.experiment.out) / name


def _seed_dir(base: Path, seeds: list[int], seed: int) -> Path:
    return base if len(seeds) == 1 else base / f"seed{seed}"


def _env_for_checkpoint(cfg: ExperimentConfig, env_id: str, reference):
    if env_id in OUT_OF_SCOPE_IDS:
        make_env(env_id)
    if env_id == "rocket-imitate":
        if reference is None:
            raise ConfigError("--reference is required for rocket-imitate")
        return make_env(env_id, world=cfg.world, reference=load_trajectory(reference),
                        imitation=replace(cfg.imitation, random_start_prob=0.0))
    if env_id == "rocket-plan":
        return make_env(env_id, world=cfg.world, plan=replace(cfg.plan, random_start_prob=0.0))
    return make_env(env_id, world=cfg.world, quad=cfg.quad)


# --- commands -----------------------------------------------------------------

def cmd_train_plan(args, cfg, log):
    from .pipeline import train_planner
    _planning_env_id(cfg, args.env)
    seeds = _seeds(cfg, args.seed)
    base = _out(cfg, args, "plan")
    failed = []
    for s in seeds:
        try:
            train_planner(cfg, s, _seed_dir(base, seeds, s), log, args.steps)
        except StageGateError as exc:
            print(f"stage gate: {exc}", file=sys.stderr)
            failed.append(s)
    return EXIT_GATE if failed else EXIT_OK


def cmd_train_imitate(args, cfg, log):
    from .pipeline import train_imitator
    if args.env != "rocket-imitate":
        make_env(args.env, world=cfg.world)  # out-of-scope / unknown ids raise here
        raise ConfigError(f"--env {args.env} is not an imitation env")
    ref = load_trajectory(args.reference)
    seeds = _seeds(cfg, args.seed)
    base = _out(cfg, args, "imitate")
    for s in seeds:
        train_imitator(cfg, ref, s, _seed_dir(base, seeds, s), log, args.steps)
    return EXIT_OK


def cmd_train_baseline(args, cfg, log):
    from .pipeline import run_baseline
    seeds = _seeds(cfg, args.seed)
    base = _out(cfg, args, "baseline")
    for s in seeds:
        run_baseline(cfg, s, _seed_dir(base, seeds, s), log, args.steps, args.env)
    return EXIT_OK


def cmd_run_pipeline(args, cfg, log):
    from .pipeline import run_two_stage
    _planning_env_id(cfg, args.env)
    seeds = _seeds(cfg, args.seed)
    base = _out(cfg, args, "pipeline")
    failed = []
    for s in seeds:
        try:
            res = run_two_stage(cfg, s, _seed_dir(base, seeds, s), log, args.steps)
            print(f"seed {s}: manifest sha256 {res.manifest_hash}")
        except StageGateError as exc:
            print(f"stage gate (seed {s}): {exc}", file=sys.stderr)
            failed.append(s)
    return EXIT_GATE if failed else EXIT_OK


def cmd_rollout(args, cfg, log):
    from .envs.quad import extract_quad_trajectory, save_quad_trajectory
    from .envs.rocket_plan import extract_trajectory, save_trajectory
    from .pipeline import rocket_rollout
    agent = load_agent(args.checkpoint)
    env_id = args.env or agent.env_id
    env = _env_for_checkpoint(cfg, env_id, args.reference)
    if env.observation_space.dimension != agent.obs_low.shape[0]:
        raise ConfigError(f"checkpoint was trained on '{agent.env_id}', not '{env_id}'")
    out = Path(args.out or f"rollout_{env_id}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    if env_id == "rocket-plan":
        traj = extract_trajectory(agent.deterministic_action, env)
        save_trajectory(traj, out)
        print(f"{len(traj)} states, final distance {traj.final_distance:.3f} m -> {out}")
    elif env_id == "quad-plan":
        traj = extract_quad_trajectory(agent.deterministic_action, env)
        save_quad_trajectory(traj, out)
        print(f"{len(traj.times)} states, final distance {traj.final_distance_to(cfg.quad.goal):.3f} m -> {out}")
    else:
        s = rocket_rollout(agent.deterministic_action, env, out)
        print(f"{s.steps} steps, return {s.total_return:.4f}, final distance {s.final_distance:.3f} m, "
              f"collisions {s.collisions} -> {out}")
    return EXIT_OK


def cmd_eval_robustness(args, cfg, log):
    from .robustness import eval_robustness, unperturbed_success
    agent = load_agent(args.checkpoint)
    env_id = args.env or agent.env_id
    if env_id not in ("rocket-full", "rocket-imitate"):
        if env_id in OUT_OF_SCOPE_IDS:
            make_env(env_id)
        raise ConfigError("robustness trials run on rocket-full or rocket-imitate")
    env = _env_for_checkpoint(cfg, env_id, args.reference)
    seed = args.seed if args.seed is not None else cfg.experiment.seeds[0]
    suite = cfg.robustness
    base_ok = unperturbed_success(agent, env, suite.success_radius)
    report = eval_robustness(agent, env, suite, seed)
    out = Path(args.out or "robustness.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(out)
    print(f"unperturbed success: {int(base_ok)}")
    for m in report.magnitudes:
        print(f"magnitude {m:g} N for {suite.duration:g} s: success rate {report.success_rate(m):.2f}")
    print(f"monotone in magnitude: {report.monotone()}  -> {out}")
    return EXIT_OK


def cmd_plot(args):
    out = Path(args.out)
    if args.run:
        rows = read_merged_csv(Path(args.run) / "curves.csv")
    else:
        if not args.curves:
            raise ConfigError("plot needs curve CSVs or --run")
        maxes = args.max_return or []
        if len(maxes) != len(args.curves):
            raise ConfigError("give one --max-return per curve")
        labels = args.labels.split(",") if args.labels else [Path(c).stem for c in args.curves]
        if len(labels) != len(args.curves):
            raise ConfigError("give one label per curve")
        series = [CurveSeries(lab, LearningCurve.read_csv(c), m) for c, m, lab in zip(args.curves, maxes, labels)]
        rows = normalize_and_merge_curves(series)
        write_merged_csv(rows, out.with_suffix(".csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_svg(rows, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_search(args, cfg, log):
    from .search import random_search, write_table
    env_id = args.env or ("rocket-plan" if cfg.experiment.task == "rocket" else "quad-plan")
    if env_id == "rocket-imitate":
        raise ConfigError("search runs on rocket-plan, quad-plan or rocket-full")
    make_env(env_id, world=cfg.world, quad=cfg.quad)  # unknown / out-of-scope ids raise here
    base = {"rocket-plan": cfg.ppo_plan, "quad-plan": cfg.ppo_plan, "rocket-full": cfg.ppo_baseline}[env_id]

    def factory(_w):
        return make_env(env_id, world=cfg.world, plan=cfg.plan, quad=cfg.quad)

    seed = args.seed if args.seed is not None else cfg.experiment.seeds[0]
    records = random_search(factory, base, cfg.search, seed, args.trials, args.steps, log)
    out = Path(args.out or "search.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(records, out)
    best = records[0]
    print(f"best trial {best.trial}: {best.final_normalized_return:.5g} {best.params} -> {out}")
    return EXIT_OK


def cmd_verify_manifest(args):
    from .pipeline import manifest_hash, verify_manifest
    problems = verify_manifest(args.run_dir)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return EXIT_RUNTIME
    print(f"ok: manifest sha256 {manifest_hash(args.run_dir)}")
    return EXIT_OK


COMMANDS = {
    "train-plan": cmd_train_plan, "train-imitate": cmd_train_imitate, "train-baseline": cmd_train_baseline,
    "run-pipeline": cmd_run_pipeline, "rollout": cmd_rollout, "eval-robustness": cmd_eval_robustness,
    "search": cmd_search,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda _m: None) if args.quiet else (lambda m: print(m, flush=True))
    try:
        if args.command == "plot":
            return cmd_plot(args)
        if args.command == "verify-manifest":
            return cmd_verify_manifest(args)
        if args.steps is not None and args.steps < 1:
            raise ConfigError("--steps must be >= 1")
        cfg = load_config(args.config)
        log(f"config {args.config}, kernels: {kernels.BACKEND}")
        return COMMANDS[args.command](args, cfg, log)
    except (ConfigError, TrajectoryFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageGateError as exc:
        print(f"stage gate: {exc}", file=sys.stderr)
        return EXIT_GATE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
