import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostage.envs.rocket import RocketEnv, RocketWorldConfig, sparse_reward
from twostage.envs.rocket_imitate import (ImitationConfig, ReferenceIndex, RocketImitationEnv, densify,
                                          imitation_reward, nearest_reference_point)
from twostage.envs.rocket_plan import (ReferenceTrajectory, RocketPlanConfig, RocketPlanEnv,
                                       TrajectoryFormatError, extract_trajectory, load_trajectory,
                                       save_trajectory)
from twostage.errors import ConfigError

NO_OBS = RocketWorldConfig.no_obstacles()
OBS = RocketWorldConfig()


def straight_reference(world=NO_OBS, n=53, step=0.5):
    ys = world.start[1] + np.minimum(np.arange(n) * step, world.goal[1] - world.start[1])
    pos = np.column_stack([np.zeros(n), ys])
    rewards = np.array([sparse_reward(p, world) for p in pos])
    return ReferenceTrajectory(0.05, world.goal, world.layout_hash(), np.arange(n) * 0.05, pos,
                               np.zeros(n), rewards)


# --- planner env ---------------------------------------------------------------------

def test_plan_additive_transition():
    env = RocketPlanEnv(NO_OBS.with_(start=(0.0, 0.0)))
    env.reset()
    env.step(np.array([0.1, 0.2, 0.0]))
    assert (env.x, env.y) == (0.1, 0.2)


def test_plan_clamps_delta():
    env = RocketPlanEnv(NO_OBS)
    env.reset()
    res = env.step(np.array([0.7, 0.0, 0.0]))
    assert env.x == 0.5 and res.info["clamped"]


def test_plan_heading_cap():
    env = RocketPlanEnv(NO_OBS)
    assert env.action_space.high[2] == pytest.approx(8.726646259971648e-4, rel=1e-12)


def test_plan_zero_action_fixed_point():
    env = RocketPlanEnv(OBS)
    env.reset()
    r1 = env.step(np.zeros(3))
    r2 = env.step(np.zeros(3))
    assert np.array_equal(r1.observation, r2.observation) and r1.reward == r2.reward


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-8e-4, 8e-4)),
                min_size=1, max_size=30))
def test_plan_additivity_and_derived_fields(actions):
    env = RocketPlanEnv(NO_OBS)
    env.reset()
    for a in actions:
        x0, y0 = env.x, env.y
        res = env.step(np.array(a))
        assert env.x == x0 + a[0] and env.y == y0 + a[1]
        assert res.info["distance"] == pytest.approx(math.dist((env.x, env.y), NO_OBS.goal), abs=1e-9)
        assert res.observation[5] == pytest.approx(math.hypot(*res.observation[3:5]), abs=1e-9)
        if res.terminated or res.truncated:
            break


def test_random_starts_only_when_enabled():
    env = RocketPlanEnv(OBS, RocketPlanConfig(random_start_prob=1.0))
    starts = {tuple(env.reset(seed=s)[:2]) for s in range(20)}
    assert len(starts) == 20
    for x, y in starts:
        assert not OBS.collides(x, y) and OBS.in_bounds(x, y)
    fixed = env.fixed_start()
    assert tuple(fixed.reset(seed=3)[:2]) == OBS.start


# --- extraction and files ------------------------------------------------------------

def test_zero_policy_trajectory():
    env = RocketPlanEnv(NO_OBS)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        traj = extract_trajectory(lambda o: np.zeros(3), env)
    assert len(traj) == env.max_steps + 1
    assert np.all(traj.positions == traj.positions[0])
    assert traj.warning and any("goal" in str(x.message) for x in w)


def test_straight_line_policy_reaches_goal():
    world = NO_OBS.with_(start=(0.0, 14.0))
    env = RocketPlanEnv(world)

    def toward(obs):
        return np.array([obs[3], obs[4], 0.0]) * 10

    traj = extract_trajectory(toward, env)
    d = np.hypot(*(traj.positions - np.array(world.goal)).T)
    first = int(np.argmax(d <= 0.5))
    assert 23 <= first <= 26


def test_trajectory_round_trip(tmp_path):
    env = RocketPlanEnv(OBS)
    rng = np.random.default_rng(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj = extract_trajectory(lambda o: rng.uniform(-0.5, 0.5, 3), env)
    path = tmp_path / "ref.csv"
    save_trajectory(traj, path)
    assert load_trajectory(path) == traj
    steps = np.abs(np.diff(traj.positions, axis=0))
    assert np.all(steps <= 0.5 + 1e-12)


def test_trajectory_rejects_bad_files(tmp_path):
    traj = straight_reference(n=3)
    good = tmp_path / "ref.csv"
    save_trajectory(traj, good)
    lines = good.read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:6] + [lines[7], lines[6]]) + "\n")
    with pytest.raises(TrajectoryFormatError) as exc:
        load_trajectory(bad)
    assert exc.value.lineno == 8
    bad.write_text("\n".join(lines[:7]) + "\n")
    with pytest.raises(TrajectoryFormatError):
        load_trajectory(bad)
    bad.write_text(good.read_text().replace("version,1", "version,9"))
    with pytest.raises(TrajectoryFormatError):
        load_trajectory(bad)
    with pytest.raises(ValueError):
        save_trajectory(ReferenceTrajectory(0.05, (0, 0), "x", np.zeros(1), np.zeros((1, 2)), np.zeros(1),
                                            np.zeros(1)), tmp_path / "one.csv")


# --- reference index -----------------------------------------------------------------

def test_densify_spacing_and_vertices():
    pts = np.array([[0.0, 0.0], [0.0, 0.1], [0.0, 0.1], [0.3, 0.1]])
    d, ids = densify(pts, 0.025, return_vertex_ids=True)
    assert np.all(np.hypot(*np.diff(d, axis=0).T) <= 0.025 + 1e-12)
    assert np.array_equal(d[ids], pts)


def test_nearest_exact_and_tie():
    idx = ReferenceIndex(straight_reference(), NO_OBS, spacing=0.5, window=None)
    xbar, r, j = nearest_reference_point((0.0, 3.0), idx)
    assert tuple(xbar) == (0.0, 3.0) and j == 2
    _, _, j = nearest_reference_point((0.0, 3.25), idx)
    assert j == 3


@settings(max_examples=50, deadline=None)
@given(st.floats(-15, 15), st.floats(0, 30))
def test_global_window_matches_bruteforce(x, y):
    rng = np.random.default_rng(1)
    pos = np.cumsum(rng.uniform(-0.5, 0.5, size=(200, 2)), axis=0)
    traj = ReferenceTrajectory(0.05, NO_OBS.goal, NO_OBS.layout_hash(), np.arange(200) * 0.05, pos,
                               np.zeros(200), np.zeros(200))
    idx = ReferenceIndex(traj, NO_OBS, window=None)
    j, d = idx.nearest(x, y)
    dists = np.hypot(idx.px - x, idx.py - y)
    assert d == pytest.approx(dists.min(), abs=1e-12)
    assert j == np.flatnonzero(dists == dists.min()).max()


def test_monotone_progress():
    idx = ReferenceIndex(straight_reference(), NO_OBS)
    rng = np.random.default_rng(2)
    last = 0
    for _ in range(300):
        j, _ = idx.nearest(*rng.uniform([-2, 0], [2, 30]))
        assert j >= last
        last = j


# --- imitation reward ----------------------------------------------------------------

def test_imitation_reward_values():
    traj = straight_reference()
    idx = ReferenceIndex(traj, NO_OBS, window=None)
    cfg = ImitationConfig()
    r_on = imitation_reward((0.0, 26.0), False, idx, cfg)
    assert r_on == pytest.approx(0.9, abs=1e-12)
    assert imitation_reward((0.0, 26.0), True, idx, cfg) == pytest.approx(0.7, abs=1e-12)
    # 1.6 m off the path beside the goal point
    assert imitation_reward((1.6, 26.0), False, idx, cfg) == pytest.approx(0.9 * math.exp(-1), abs=1e-12)
    # a path vertex whose stored reward is 0.5, with and without collision
    y = 26.0 - math.log(0.9 / 0.5)
    pos = np.array([[0.0, 2.0], [0.0, y]])
    half = ReferenceTrajectory(0.05, NO_OBS.goal, NO_OBS.layout_hash(), np.array([0.0, 0.05]), pos,
                               np.zeros(2), np.array([sparse_reward(p, NO_OBS) for p in pos]))
    idx = ReferenceIndex(half, NO_OBS, window=None)
    assert imitation_reward((0.0, y), False, idx, cfg) == pytest.approx(0.5, abs=1e-12)
    assert imitation_reward((0.0, y), True, idx, cfg) == pytest.approx(0.3, abs=1e-12)


def test_teleport_tracking_reproduces_stored_rewards():
    traj = straight_reference()
    env = RocketImitationEnv(traj, NO_OBS)
    env.reset()
    got = []
    for p in traj.positions[1:]:
        env.teleport(*p)
        got.append(env.step(np.zeros(2)).reward)
    assert np.allclose(got, traj.rewards[1:], atol=1e-12, rtol=0)


def test_same_dynamics_different_rewards():
    traj = straight_reference()
    full, imi = RocketEnv(NO_OBS), RocketImitationEnv(traj, NO_OBS)
    full.reset()
    imi.reset()
    rng = np.random.default_rng(4)
    for _ in range(100):
        a = rng.uniform(-1, 1, 2)
        rf, ri = full.step(a), imi.step(a)
        assert np.array_equal(rf.observation, ri.observation)
        assert rf.terminated == ri.terminated
        assert ri.reward <= traj.rewards.max() + 1e-12
        if rf.terminated or rf.truncated:
            break


def test_layout_mismatch_rejected():
    with pytest.raises(ConfigError):
        RocketImitationEnv(straight_reference(NO_OBS), OBS)


def test_reference_state_init():
    traj = straight_reference()
    env = RocketImitationEnv(traj, NO_OBS, ImitationConfig(random_start_prob=1.0))
    ys = {float(env.reset(seed=s)[1]) for s in range(10)}
    assert ys <= set(traj.positions[:, 1].tolist()) and len(ys) > 1
    assert env.fixed_start().reset()[1] == NO_OBS.start[1]
