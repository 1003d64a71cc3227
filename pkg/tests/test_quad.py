import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostage.envs.quad import (FootfallPattern, QuadPlanConfig, QuadPlanEnv, QuadPlanState, contact_flag,
                                contacts_at, desired_foot_z, extract_quad_trajectory, initial_state,
                                load_quad_trajectory, original_quad_reward, plan_reward, plan_reward_terms,
                                quad_termination, save_quad_trajectory)

TROT = QuadPlanConfig()
WALK = QuadPlanConfig(gait="walk")


def ideal_state(cfg=TROT, at_goal=True):
    s = initial_state(cfg)
    if at_goal:
        shift = np.array([cfg.goal[0] - s.body[0], cfg.goal[1] - s.body[1], 0.0])
        s.body = s.body + shift
        s.feet = s.feet + shift
    return s


# --- schedule -------------------------------------------------------------------------

def test_trot_phase_zero():
    p = FootfallPattern.trot()
    assert [contact_flag(p, j, 0.0) for j in range(4)] == [True, False, False, True]


def test_contact_late_phase():
    assert contact_flag(FootfallPattern("x", 1.0, (0, 0, 0, 0), 0.5), 0, 0.999) is False


@given(st.floats(0, 1, exclude_max=True))
def test_contact_counts(phase):
    assert sum(contacts_at(FootfallPattern.trot(), phase)) == 2
    assert sum(contacts_at(FootfallPattern.walk(), phase)) == 3


def test_foot_heights():
    assert desired_foot_z(True) == 0.0 and desired_foot_z(False) == 0.10


def test_trot_square_wave():
    env = QuadPlanEnv(TROT.__class__(max_steps=30))
    env.reset()
    zs = [env.state.feet[0, 2]]
    for _ in range(12):
        env.step(np.zeros(11))
        zs.append(env.state.feet[0, 2])
    # period 0.6 s = 6 steps, half in contact
    assert zs[:12] == [0.0, 0.0, 0.0, 0.1, 0.1, 0.1] * 2


# --- caps ---------------------------------------------------------------------------

def test_caps():
    assert TROT.body_step_cap == pytest.approx(0.063, abs=1e-15)
    assert WALK.ee_step_cap == pytest.approx(0.04125, abs=1e-15)
    assert TROT.ee_step_cap == pytest.approx(0.0315, abs=1e-15)
    assert WALK.body_step_cap == pytest.approx(0.0264, abs=1e-15)


def test_zero_action_keeps_body():
    env = QuadPlanEnv(TROT)
    env.reset()
    b0 = env.state.body.copy()
    res = env.step(np.zeros(11))
    assert np.array_equal(env.state.body, b0)
    assert env.state.phase > 0
    assert all(env.state.feet[j, 2] == desired_foot_z(c) for j, c in enumerate(res.info["contacts"]))


# --- rewards --------------------------------------------------------------------------

def test_plan_reward_ideal():
    assert plan_reward(ideal_state(), TROT) == pytest.approx(1.0, abs=1e-12)


def test_plan_reward_one_metre():
    s = ideal_state()
    s.body = s.body - np.array([1.0, 0, 0])
    s.feet = s.feet - np.array([1.0, 0, 0])
    assert plan_reward(s, TROT) == pytest.approx(math.exp(-2.5), abs=1e-12)


def test_plan_reward_com_offset():
    s = ideal_state()
    s.feet = s.feet + np.array([0.0, 0.1, 0.0])
    t = plan_reward_terms(s, TROT)
    assert t["r_com"] == pytest.approx(math.exp(-0.4), abs=1e-12)
    assert [t["r_dist"], t["r_x_pen"], t["r_com_z"]] == pytest.approx([1.0] * 3, abs=1e-12)


def test_original_reward_terms():
    prev = ideal_state()
    curr = ideal_state()
    total, terms = original_quad_reward(prev, curr, TROT)
    assert total == pytest.approx(1.0, abs=1e-12)
    contacts = contacts_at(TROT.pattern, curr.phase)
    stance = contacts.index(True)
    slipped = ideal_state()
    slipped.feet[stance, 0] += 0.05
    _, terms = original_quad_reward(prev, slipped, TROT)
    assert terms["r_ns"] == pytest.approx(math.exp(-0.5), abs=1e-12)
    swing = contacts.index(False)
    low = ideal_state()
    low.feet[swing, 2] = 0.0
    _, terms = original_quad_reward(prev, low, TROT)
    assert terms["r_ee_z"] == pytest.approx(math.exp(-2.0), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3), min_size=15, max_size=15))
def test_reward_range_and_factorization(v):
    s = ideal_state(at_goal=False)
    s.body = s.body + np.array(v[:3])
    s.feet = s.feet + np.array(v[3:]).reshape(4, 3)
    r = plan_reward(s, TROT)
    assert 0 < r <= 1
    total, terms = original_quad_reward(ideal_state(at_goal=False), s, TROT)
    assert 0 < total <= 1
    assert total == pytest.approx(math.prod(terms.values()), abs=1e-12)


# --- termination ----------------------------------------------------------------------

def test_termination_reasons():
    s = initial_state(TROT)
    s.body[2] = 0.31
    assert quad_termination(s, 1, TROT) == (True, False, "com_height")
    s = initial_state(TROT)
    s.body[0] = -0.5
    assert quad_termination(s, 1, TROT) == (True, False, "deviation")
    s = initial_state(TROT)
    assert quad_termination(s, 59, TROT) == (False, True, "max_steps")
    s.body[0] = 1.95
    assert quad_termination(s, 3, TROT) == (True, False, "goal")


def test_env_truncates_at_59():
    env = QuadPlanEnv(TROT)
    env.reset()
    n = 0
    while True:
        res = env.step(np.zeros(11))
        n += 1
        if res.terminated or res.truncated:
            break
    assert n == 59 and res.truncated and res.info["reason"] == "max_steps"
    assert env.theoretical_max_return() == 59.0


# --- rollouts and files ---------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["trot", "walk"]))
def test_random_rollouts_obey_schedule_and_caps(seed, gait):
    cfg = QuadPlanConfig(gait=gait)
    env = QuadPlanEnv(cfg)
    rng = np.random.default_rng(seed)
    traj = extract_quad_trajectory(lambda o: rng.uniform(-0.2, 0.2, 11), env)
    for i in range(len(traj.times)):
        n_contact = int(traj.contacts[i].sum())
        assert n_contact == (2 if gait == "trot" else 3)
        for j in range(4):
            assert traj.feet[i, j, 2] == desired_foot_z(bool(traj.contacts[i, j]))
    assert np.all(np.abs(np.diff(traj.body, axis=0)) <= cfg.body_step_cap + 1e-12)
    assert np.all(np.abs(np.diff(traj.feet[:, :, :2], axis=0)) <= cfg.ee_step_cap + 1e-12)


def test_zero_policy_trajectory_and_round_trip(tmp_path):
    env = QuadPlanEnv(TROT)
    traj = extract_quad_trajectory(lambda o: np.zeros(11), env)
    assert np.all(traj.body == traj.body[0])
    assert traj.warning
    path = tmp_path / "q.csv"
    save_quad_trajectory(traj, path)
    assert load_quad_trajectory(path) == traj


def test_observation_bounds():
    env = QuadPlanEnv(WALK)
    obs = env.reset()
    assert obs.shape == (20,) and env.observation_space.contains(obs)
