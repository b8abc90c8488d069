"""Exception types shared across the package."""

from __future__ import annotations


class HdkdeError(Exception):
    """Base class for all library errors."""


class DomainError(HdkdeError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(DomainError):
    """The operation is not meaningful for the given parameters."""


class ConvergenceError(HdkdeError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class BracketError(HdkdeError, RuntimeError):
    """No sign change was found on the scanned interval."""

    def __init__(self, message: str, interval: tuple[float, float]):
        super().__init__(f"{message} on [{interval[0]:.6g}, {interval[1]:.6g}]")
        self.interval = interval


class ResourceCapError(HdkdeError):
    """A simulation would exceed the configured resource cap."""


class SchemaError(HdkdeError, ValueError):
    """A configuration document failed validation.

    ``problems`` holds one human-readable entry per offending field.
    """

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = list(problems)
