"""Exception types shared across the package."""

from .nn import ContractViolation, NumericError


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class OutOfScopeError(ConfigError):
    """The requested environment or stage is not implemented by design."""


class StageGateError(RuntimeError):
    """The planning stage did not produce a plan worth imitating."""


__all__ = ["ConfigError", "ContractViolation", "NumericError", "OutOfScopeError", "StageGateError"]
