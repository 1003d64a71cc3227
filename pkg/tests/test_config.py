import pytest

from twostage.config import (ExperimentConfig, config_from_parser, dump_config, load_config, load_preset,
                             parse_value, preset_names, _parser)
from twostage.errors import ConfigError


def parse(text, base=None):
    cp = _parser()
    cp.read_string(text)
    return config_from_parser(cp, base)


def test_presets_load_and_validate():
    assert preset_names() == ["quad-trot", "quad-walk", "rocket-no-obstacle", "rocket-obstacle"]
    no_obs = load_preset("rocket-no-obstacle")
    assert not no_obs.world.obstacles_enabled and no_obs.world.k1 == -1.0 and no_obs.world.w2 == 0.0
    obs = load_preset("rocket-obstacle")
    assert obs.world.obstacles_enabled and obs.plan.random_start_prob == 0.5
    trot, walk = load_preset("quad-trot"), load_preset("quad-walk")
    assert trot.experiment.task == walk.experiment.task == "quad"
    assert trot.quad.body_step_cap == pytest.approx(0.063) and walk.quad.ee_step_cap == pytest.approx(0.04125)
    assert trot.experiment.planning_steps == 500_000 and trot.experiment.gate_distance == 0.3


def test_shared_and_stage_ppo_sections():
    cfg = parse("[ppo]\nlearning_rate = 1e-3\n[ppo.imitate]\nlearning_rate = 5e-4\n")
    assert cfg.ppo_plan.learning_rate == 1e-3 and cfg.ppo_baseline.learning_rate == 1e-3
    assert cfg.ppo_imitate.learning_rate == 5e-4


def test_typed_values():
    cfg = parse("[experiment]\nseeds = 4, 5\n[world]\ngoal = 1.5, 20\nobstacles_enabled = no\n"
                "[ppo]\nhidden_sizes = 32, 32, 16\n[quad]\nbase_max_speed = 0.5\n")
    assert cfg.experiment.seeds == (4, 5)
    assert cfg.world.goal == (1.5, 20.0) and cfg.world.obstacles_enabled is False
    assert cfg.ppo_plan.hidden_sizes == (32, 32, 16)
    assert cfg.quad.body_step_cap == pytest.approx(0.05)
    assert parse_value("none", float | None) is None


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n",
    "[world]\nnope = 1\n",
    "[world]\ngravity = heavy\n",
    "[world]\ngoal = 1, 2, 3\n",
    "[experiment]\ntask = fish\n",
    "[ppo]\nnum_workers = 0\n",
    "[ppo.plan]\nminibatch_size = -4\n",
    "[quad]\ngait = gallop\n",
    "[imitation]\nk_imi = 0.5\n",
    "[experiment]\nseeds = \n",
])
def test_bad_configs_raise(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_gait_switch_rederives_caps():
    cfg = parse("[quad]\ngait = walk\n", load_preset("quad-trot"))
    assert cfg.quad.body_step_cap == pytest.approx(0.0264)


def test_dump_round_trip(tmp_path):
    cfg = load_preset("rocket-obstacle")
    path = tmp_path / "c.ini"
    path.write_text(dump_config(cfg))
    again = load_config(path)
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_preset_reference_and_missing_file(tmp_path):
    path = tmp_path / "mine.ini"
    path.write_text("[experiment]\npreset = rocket-obstacle\nplanning_steps = 1000\n")
    cfg = load_config(path)
    assert cfg.experiment.planning_steps == 1000 and cfg.plan.random_start_prob == 0.5
    assert load_config("quad-walk").quad.gait == "walk"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    assert ExperimentConfig().experiment.effective_baseline_steps == 600_000
