"""Typed failures shared across the package.

The CLI maps these onto process exit codes, so the split matters:
configuration problems are ValueError subclasses, numerical problems
derive from SolverError.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """A run configuration failed validation. Carries field-level messages."""

    def __init__(self, messages: list[str] | str):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class StationaryDistributionError(ValueError):
    """The chain admits no unique stationary distribution."""


class SolverError(RuntimeError):
    """Base class for numerical failures in the planning stack."""


class ConvergenceError(SolverError):
    """An iteration limit was hit before the stopping rule fired."""

    def __init__(self, message: str, span: float | None = None):
        super().__init__(message)
        self.span = span


class MultichainError(SolverError):
    """A policy induced more than one closed recurrent class."""


class BracketError(SolverError):
    """The multiplier upper bound never brought the cost under budget."""


class InfeasibleBudgetError(SolverError):
    """No stationary policy meets the cost budget."""


class ThresholdStructureError(ValueError):
    """A deterministic policy is not representable by monotone thresholds.

    ``violations`` lists offending state pairs as
    ``((delta_a, v_a), (delta_b, v_b))`` tuples where the action ordering
    contradicts the threshold form.
    """

    def __init__(self, message: str, violations: list[tuple]):
        super().__init__(message)
        self.violations = violations
