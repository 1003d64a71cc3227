"""Experiment configuration: sectioned INI files with typed parsing.

Every section maps onto a dataclass; keys are parsed according to the
dataclass field annotations and unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .envs import ImitationConfig, QuadPlanConfig, RocketPlanConfig, RocketWorldConfig
from .errors import ConfigError
from .ppo import PpoConfig

PRESET_DIR = Path(__file__).parent / "presets"
TASKS = ("rocket", "quad")


@dataclass
class StageConfig:
    task: str = "rocket"
    planning_steps: int = 300_000
    imitation_steps: int = 300_000
    baseline_steps: int = 0  # 0 means planning_steps + imitation_steps
    seeds: tuple[int, ...] = (0, 1, 2)
    gate_distance: float = 2.0
    out: str = "runs"

    @property
    def effective_baseline_steps(self) -> int:
        return self.baseline_steps or self.planning_steps + self.imitation_steps


@dataclass
class RobustnessConfig:
    magnitudes: tuple[float, ...] = (0.0, 0.5)
    duration: float = 0.1
    trials: int = 20
    # perturbation onset is drawn uniformly from this step range
    earliest_step: int = 25
    latest_step: int = 150
    success_radius: float = 2.0


@dataclass
class SearchConfig:
    trials: int = 8
    steps_per_trial: int = 50_000
    learning_rate: tuple[float, float] = (1e-4, 1e-3)
    entropy_coef: tuple[float, float] = (1e-4, 1e-2)
    clip_epsilon: tuple[float, ...] = (0.1, 0.2, 0.3)
    minibatch_size: tuple[int, ...] = (128, 256, 512)
    gae_lambda: tuple[float, ...] = (0.9, 0.95, 0.98)


@dataclass
class ExperimentConfig:
    experiment: StageConfig = field(default_factory=StageConfig)
    world: RocketWorldConfig = field(default_factory=RocketWorldConfig)
    plan: RocketPlanConfig = field(default_factory=RocketPlanConfig)
    imitation: ImitationConfig = field(default_factory=ImitationConfig)
    quad: QuadPlanConfig = field(default_factory=QuadPlanConfig)
    ppo_plan: PpoConfig = field(default_factory=PpoConfig)
    ppo_imitate: PpoConfig = field(default_factory=PpoConfig)
    ppo_baseline: PpoConfig = field(default_factory=PpoConfig)
    robustness: RobustnessConfig = field(default_factory=RobustnessConfig)
    search: SearchConfig = field(default_factory=SearchConfig)

    def validate(self) -> None:
        e = self.experiment
        if e.task not in TASKS:
            raise ConfigError(f"experiment.task must be one of {TASKS}")
        for name in ("planning_steps", "imitation_steps"):
            if getattr(e, name) < 1:
                raise ConfigError(f"experiment.{name} must be >= 1")
        if e.baseline_steps < 0:
            raise ConfigError("experiment.baseline_steps must be >= 0")
        if not e.seeds:
            raise ConfigError("experiment.seeds must list at least one seed")
        if e.gate_distance <= 0:
            raise ConfigError("experiment.gate_distance must be positive")
        for name in ("ppo_plan", "ppo_imitate", "ppo_baseline"):
            try:
                getattr(self, name).validate()
            except ConfigError as exc:
                raise ConfigError(f"[{name.replace('_', '.')}] {exc}") from None
        r = self.robustness
        if r.trials < 1 or r.duration < 0 or any(m < 0 for m in r.magnitudes):
            raise ConfigError("robustness: trials >= 1, duration >= 0 and magnitudes >= 0 required")
        if not 0 <= r.earliest_step <= r.latest_step:
            raise ConfigError("robustness: need 0 <= earliest_step <= latest_step")
        if self.search.trials < 1 or self.search.steps_per_trial < 1:
            raise ConfigError("search: trials and steps_per_trial must be >= 1")


# INI section name -> ExperimentConfig attribute. The shared [ppo] section
# seeds all three PPO configs; [ppo.plan] etc. override per stage.
SECTIONS = {
    "experiment": "experiment", "world": "world", "plan": "plan", "imitation": "imitation",
    "quad": "quad", "robustness": "robustness", "search": "search",
    "ppo.plan": "ppo_plan", "ppo.imitate": "ppo_imitate", "ppo.baseline": "ppo_baseline",
}
PPO_ATTRS = ("ppo_plan", "ppo_imitate", "ppo_baseline")


def _parse_scalar(text: str, tp, where: str):
    text = text.strip()
    try:
        if tp is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if tp is int:
            return int(text.replace("_", ""))
        if tp is float:
            return float(text.replace("_", ""))
        if tp is str:
            return text
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unsupported type {tp}")


def parse_value(text: str, tp, where: str = "value"):
    """Parse ``text`` as the annotated type ``tp``."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and str(origin) == "<class 'types.UnionType'>"):
        non_none = [a for a in args if a is not type(None)]
        if text.strip().lower() in ("", "none") and len(non_none) < len(args):
            return None
        return parse_value(text, non_none[0], where)
    if origin is tuple:
        parts = [p for p in (s.strip() for s in text.split(",")) if p]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_parse_scalar(p, args[0], where) for p in parts)
        if len(parts) != len(args):
            raise ConfigError(f"{where}: expected {len(args)} comma-separated values, got {len(parts)}")
        return tuple(_parse_scalar(p, a, where) for p, a in zip(parts, args))
    return _parse_scalar(text, tp, where)


def format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    return str(value)


def _apply(obj, items: dict[str, str], section: str):
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in items.items():
        if key not in names:
            raise ConfigError(f"[{section}] unknown key '{key}'")
        updates[key] = parse_value(raw, hints[key], f"[{section}] {key}")
    if isinstance(obj, QuadPlanConfig) and "gait" in updates:
        # speed caps default per gait; re-derive unless given explicitly
        updates.setdefault("base_max_speed", None)
        updates.setdefault("ee_max_angular_speed", None)
    try:
        return dataclasses.replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def config_from_parser(cp: configparser.ConfigParser, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    for section in cp.sections():
        if section != "ppo" and section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    if cp.has_section("ppo"):
        shared = dict(cp.items("ppo"))
        for attr in PPO_ATTRS:
            setattr(cfg, attr, _apply(getattr(cfg, attr), shared, "ppo"))
    for section, attr in SECTIONS.items():
        if cp.has_section(section):
            setattr(cfg, attr, _apply(getattr(cfg, attr), dict(cp.items(section)), section))
    cfg.validate()
    return cfg


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep keys case-sensitive
    return cp


def load_config(path) -> ExperimentConfig:
    """Read an INI file. A ``preset = name`` key in ``[experiment]`` loads
    that bundled preset first and applies the file on top."""
    path = Path(path)
    if not path.is_file():
        candidate = PRESET_DIR / f"{path.name}.ini" if path.suffix != ".ini" else PRESET_DIR / path.name
        if not candidate.is_file():
            raise ConfigError(f"config file not found: {path}")
        path = candidate
    cp = _parser()
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = None
    if cp.has_option("experiment", "preset"):
        base = load_config(PRESET_DIR / f"{cp.get('experiment', 'preset')}.ini")
        cp.remove_option("experiment", "preset")
    return config_from_parser(cp, base)


def load_preset(name: str) -> ExperimentConfig:
    return load_config(PRESET_DIR / f"{name}.ini")


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.ini"))


def dump_config(cfg: ExperimentConfig) -> str:
    """Full INI rendering (every key explicit), stable across runs."""
    lines = []
    for section, attr in SECTIONS.items():
        lines.append(f"[{section}]")
        obj = getattr(cfg, attr)
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)
