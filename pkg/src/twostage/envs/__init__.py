"""Environments and the string-id registry."""

from ..errors import ConfigError, OutOfScopeError
from .base import Env, SpaceSpec, StepResult
from .quad import QuadPlanConfig, QuadPlanEnv
from .rocket import RocketEnv, RocketWorldConfig
from .rocket_imitate import ImitationConfig, RocketImitationEnv
from .rocket_plan import RocketPlanConfig, RocketPlanEnv

ENV_IDS = ("rocket-full", "rocket-plan", "rocket-imitate", "quad-plan")
OUT_OF_SCOPE_IDS = ("quad-full", "quad-imitate")


def make_env(env_id: str, *, world=None, plan=None, imitation=None, reference=None, quad=None) -> Env:
    if env_id == "rocket-full":
        return RocketEnv(world)
    if env_id == "rocket-plan":
        return RocketPlanEnv(world, plan)
    if env_id == "rocket-imitate":
        if reference is None:
            raise ConfigError("rocket-imitate needs a reference trajectory")
        return RocketImitationEnv(reference, world, imitation)
    if env_id == "quad-plan":
        return QuadPlanEnv(quad)
    if env_id in OUT_OF_SCOPE_IDS:
        raise OutOfScopeError(f"env '{env_id}' needs articulated quadruped physics, which is out of scope")
    raise ConfigError(f"unknown env id '{env_id}' (known: {', '.join(ENV_IDS)})")


__all__ = ["ENV_IDS", "Env", "SpaceSpec", "StepResult", "make_env", "RocketEnv", "RocketWorldConfig",
           "RocketPlanEnv", "RocketPlanConfig", "RocketImitationEnv", "ImitationConfig",
           "QuadPlanEnv", "QuadPlanConfig"]
