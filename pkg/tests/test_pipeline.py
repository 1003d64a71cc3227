import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostage.config import RobustnessConfig, SearchConfig, load_config, load_preset
from twostage.envs import make_env
from twostage.envs.rocket import RocketWorldConfig
from twostage.envs.rocket_plan import ReferenceTrajectory, load_trajectory
from twostage.errors import ConfigError, OutOfScopeError, StageGateError
from twostage.pipeline import (manifest_hash, obstacle_clearance, run_baseline, run_two_stage, train_planner,
                               verify_manifest, write_manifest)
from twostage.plotting import (CurveSeries, normalize_and_merge_curves, read_merged_csv, svg_line_plot,
                               write_merged_csv)
from twostage.ppo import CurvePoint, LearningCurve, PpoConfig, make_agent
from twostage.robustness import eval_robustness, unperturbed_success
from twostage.search import TrialRecord, random_search, rank_trials, sample_params


def curve(points, max_return=10.0):
    c = LearningCurve(max_return)
    for steps, ret in points:
        c.append(CurvePoint(steps, ret, ret / max_return, 1, 0.0, 0.0, 0.0))
    return c


# --- manifest ---------------------------------------------------------------------------

def test_manifest_write_verify_and_tamper(tmp_path):
    (tmp_path / "a.txt").write_text("alpha")
    (tmp_path / "b.txt").write_text("beta")
    h = write_manifest(tmp_path, ["b.txt", "a.txt"], {"seed": 1})
    assert h == manifest_hash(tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert [e["path"] for e in doc["files"]] == ["a.txt", "b.txt"]
    assert verify_manifest(tmp_path) == []
    (tmp_path / "a.txt").write_text("tampered")
    assert verify_manifest(tmp_path) == ["a.txt: hash mismatch"]
    (tmp_path / "b.txt").unlink()
    assert "b.txt: missing" in verify_manifest(tmp_path)
    assert verify_manifest(tmp_path / "nowhere")


# --- curves and plots -------------------------------------------------------------------

def test_merge_offsets_second_stage():
    rows = normalize_and_merge_curves([CurveSeries("planning", curve([(100, 1.0), (200, 5.0)]), 10.0),
                                       CurveSeries("imitation", curve([(50, 2.0)]), 4.0)])
    assert [(r.stage, r.env_steps, r.normalized_return) for r in rows] == \
        [("planning", 100, 0.1), ("planning", 200, 0.5), ("imitation", 250, 0.5)]


def test_merge_rejects_overflow_and_bad_max():
    with pytest.raises(ValueError):
        normalize_and_merge_curves([CurveSeries("x", curve([(1, 11.0)]), 10.0)])
    with pytest.raises(ValueError):
        normalize_and_merge_curves([CurveSeries("x", curve([(1, 1.0)]), 0.0)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 10), min_size=1, max_size=20))
def test_normalized_never_exceeds_one(returns):
    c = curve([(i + 1, r) for i, r in enumerate(returns)])
    assert all(r.normalized_return <= 1 + 1e-9 for r in normalize_and_merge_curves([CurveSeries("s", c, 10.0)]))


def test_merged_csv_and_svg(tmp_path):
    rows = normalize_and_merge_curves([CurveSeries("planning", curve([(100, 1.0), (200, float("nan"))]), 10.0),
                                       CurveSeries("base", curve([(300, 2.0)]), 10.0, series="baseline")])
    write_merged_csv(rows, tmp_path / "m.csv")
    back = read_merged_csv(tmp_path / "m.csv")
    assert len(back) == 3 and back[0] == rows[0] and math.isnan(back[1].normalized_return)
    svg = svg_line_plot(rows)
    assert svg.startswith("<svg") and "planning" in svg and "baseline" in svg
    assert svg == svg_line_plot(rows)


# --- stage runners ------------------------------------------------------------------------

def test_pipeline_is_deterministic(tiny_config, tmp_path):
    cfg = load_config(tiny_config)
    a = run_two_stage(cfg, 0, tmp_path / "a", log=lambda m: None)
    b = run_two_stage(cfg, 0, tmp_path / "b", log=lambda m: None)
    assert a.manifest_hash == b.manifest_hash
    for name in ("manifest.json", "curves.csv", "curves.svg", "reference.csv", "imitator.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert verify_manifest(tmp_path / "a") == []
    doc = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert doc["info"]["plan_steps"] == 400 and doc["info"]["imitate_steps"] == 400
    c = run_two_stage(cfg, 1, tmp_path / "c", log=lambda m: None)
    assert c.manifest_hash != a.manifest_hash


def test_gate_failure_keeps_artifacts(tiny_config, tmp_path):
    cfg = load_config(tiny_config)
    cfg.experiment.gate_distance = 1e-6
    with pytest.raises(StageGateError):
        train_planner(cfg, 0, tmp_path, log=lambda m: None)
    assert verify_manifest(tmp_path) == []
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["info"]["gate"]["passed"] is False
    assert len(load_trajectory(tmp_path / "reference.csv")) >= 1


def test_budget_must_split_across_workers(tiny_config, tmp_path):
    cfg = load_config(tiny_config)
    with pytest.raises(ConfigError):
        train_planner(cfg, 0, tmp_path, log=lambda m: None, steps=402)


def test_quad_pipeline_and_baseline_out_of_scope(tmp_path):
    cfg = load_preset("quad-trot")
    with pytest.raises(OutOfScopeError):
        run_two_stage(cfg, 0, tmp_path)
    with pytest.raises(OutOfScopeError):
        run_baseline(cfg, 0, tmp_path)
    with pytest.raises(ConfigError):
        run_baseline(load_preset("rocket-obstacle"), 0, tmp_path, env_id="rocket-plan")


def test_quad_planner_stage(tmp_path):
    cfg = load_preset("quad-walk")
    cfg.experiment.gate_distance = 10.0
    res = train_planner(cfg, 0, tmp_path, log=lambda m: None, steps=400)
    assert (tmp_path / "quad_plan.csv").exists() and verify_manifest(tmp_path) == []
    assert len(res.plan_curve) >= 1


def test_obstacle_clearance_of_straight_path():
    world = RocketWorldConfig()
    traj = load_trajectory_like([(0.0, 2.0), (0.0, 26.0)], world)
    assert obstacle_clearance(traj, world) == pytest.approx([3.0, 3.0])


def load_trajectory_like(points, world):
    pos = np.array(points, dtype=float)
    n = len(pos)
    return ReferenceTrajectory(0.05, world.goal, world.layout_hash(), np.arange(n) * 0.05, pos, np.zeros(n),
                               np.zeros(n))


# --- robustness and search ------------------------------------------------------------------

def test_robustness_trials_are_seeded():
    env = make_env("rocket-full", world=RocketWorldConfig.no_obstacles())
    agent = make_agent(env, PpoConfig(), 0)
    suite = RobustnessConfig(magnitudes=(0.0, 0.5), trials=3, earliest_step=2, latest_step=5)
    a = eval_robustness(agent, env, suite, seed=4)
    b = eval_robustness(agent, env, suite, seed=4)
    assert a.rows == b.rows and len(a.rows) == 6
    assert {r.duration_steps for r in a.rows} == {5}
    assert a.rows[3].velocity_kick == pytest.approx(0.05)
    # an untrained policy never reaches the goal
    assert a.success_rate(0.0) == 0.0 and unperturbed_success(agent, env) is False


def test_search_is_seeded_and_ranked():
    space = SearchConfig(trials=3, steps_per_trial=840)
    rng1, rng2 = np.random.default_rng(0), np.random.default_rng(0)
    p = sample_params(space, rng1)
    assert p == sample_params(space, rng2)
    assert 1e-4 <= p["learning_rate"] <= 1e-3 and p["clip_epsilon"] in (0.1, 0.2, 0.3)
    base = PpoConfig(steps_per_update=20, num_workers=2, hidden_sizes=(8,), epochs_per_update=1)

    def factory(_w):
        return make_env("rocket-plan", world=RocketWorldConfig.no_obstacles())

    a = random_search(factory, base, space, 3, log=None)
    b = random_search(factory, base, space, 3, log=None)
    assert [(r.trial, r.params, r.final_normalized_return) for r in a] == \
        [(r.trial, r.params, r.final_normalized_return) for r in b]
    scores = [r.final_normalized_return for r in a]
    assert all(r.status == "ok" for r in a)
    assert scores == sorted(scores, reverse=True)


def test_failed_trials_rank_last():
    recs = [TrialRecord(0, {}, "failed", float("nan")), TrialRecord(1, {}, "ok", 0.1),
            TrialRecord(2, {}, "ok", 0.3)]
    assert [r.trial for r in rank_trials(recs)] == [2, 1, 0]
