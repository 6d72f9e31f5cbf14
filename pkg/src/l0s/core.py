"""Shared enumerations, errors and numeric constants."""

from enum import Enum


class KernelKind(Enum):
    """Interpolation kernel families used inside one coarse interval."""

    Constant = "constant"
    Linear = "linear"
    Exponential = "exponential"
    Inverse = "inverse"
    ArgmaxDelta = "argmax"

    @classmethod
    def parse(cls, name: str) -> "KernelKind":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise DomainError(f"unknown kernel '{name}' (expected one of: {valid})") from None

    @property
    def has_density(self) -> bool:
        """ArgmaxDelta only exists at ray level and has no per-interval density."""
        return self is not KernelKind.ArgmaxDelta


class SampleMode(Enum):
    """How uniform variates are drawn before CDF inversion."""

    Stratified = "stratified"
    Independent = "independent"
    Deterministic = "deterministic"


# Endpoint weights are clamped to this before any logarithm is taken
WEIGHT_FLOOR = 1e-5

# Below this |ln b - ln a| the exponential and inverse kernels use constant limits
DEGENERACY_THRESHOLD = 1e-7

# Stand-in for the infinite length of the last interval when computing alphas
LAST_DELTA = 1e10

# Additive floor of maxblur
BLUR_FLOOR = 0.01


class L0sError(Exception):
    """Root of all errors raised by this package."""


class DomainError(L0sError, ValueError):
    """Numeric input outside the domain of an operation."""


class ConfigError(L0sError):
    """Experiment configuration problems, each tagged with the offending field path."""

    def __init__(self, issues: list[tuple[str, str]]) -> None:
        self.issues = issues
        super().__init__("\n".join(f"{field}: {message}" for field, message in issues))

    @classmethod
    def single(cls, field: str, message: str) -> "ConfigError":
        return cls([(field, message)])

    @property
    def fields(self) -> list[str]:
        return [field for field, _ in self.issues]
