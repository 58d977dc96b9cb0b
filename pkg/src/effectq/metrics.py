"""Effectiveness metrics: grade-of-effectiveness families and the exponential score.

The grade of effectiveness (GoE) of a received update composes an age
penalty with a usefulness utility. Four penalty shapes, two utility shapes
and three composition rules are supported; query spending is charged through
a linear cost. The exponential net score ``ngoe`` is the evaluation-side
metric: exp(-v * delta - c0 * alpha), which lives in (0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PENALTY_FAMILIES = ("reciprocal", "exp_decay", "neg_linear", "constant")
UTILITY_FAMILIES = ("linear", "constant")
COMPOSE_RULES = ("product", "penalty_only", "utility_only")
COST_FAMILIES = ("linear",)


@dataclass(frozen=True)
class GoeConfig:
    """Which penalty/utility/composition shapes the metric uses.

    ``decay_rate`` is the exponent for the ``exp_decay`` penalty and is
    ignored by the other families.
    """

    penalty: str = "reciprocal"
    utility: str = "linear"
    compose: str = "product"
    cost: str = "linear"
    decay_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.penalty not in PENALTY_FAMILIES:
            raise ValueError(f"unknown penalty family {self.penalty!r}")
        if self.utility not in UTILITY_FAMILIES:
            raise ValueError(f"unknown utility family {self.utility!r}")
        if self.compose not in COMPOSE_RULES:
            raise ValueError(f"unknown composition rule {self.compose!r}")
        if self.cost not in COST_FAMILIES:
            raise ValueError(f"unknown cost family {self.cost!r}")
        if self.penalty == "exp_decay" and self.decay_rate <= 0.0:
            raise ValueError("exp_decay needs decay_rate > 0")


@dataclass(frozen=True)
class CostModel:
    """Per-query spend. c0 is the price of a single pull."""

    c0: float = 0.5

    def __post_init__(self) -> None:
        if self.c0 < 0.0:
            raise ValueError("c0 must be nonnegative")


def penalty_value(config: GoeConfig, delta: float) -> float:
    if config.penalty == "reciprocal":
        return 1.0 / delta
    if config.penalty == "exp_decay":
        return math.exp(-config.decay_rate * delta)
    if config.penalty == "neg_linear":
        return -float(delta)
    return 1.0


def utility_value(config: GoeConfig, v: float) -> float:
    if config.utility == "linear":
        return float(v)
    return 1.0


def goe(delta: float, v: float, config: GoeConfig) -> float:
    """Grade of effectiveness at age ``delta`` and usefulness ``v``."""
    if delta < 1:
        raise ValueError(f"age must be >= 1, got {delta}")
    if config.compose == "product":
        return penalty_value(config, delta) * utility_value(config, v)
    if config.compose == "penalty_only":
        return penalty_value(config, delta)
    return utility_value(config, v)


def pull_gated(goe_value: float, alpha: int) -> float:
    """GoE accrues only on slots where a query was issued."""
    return goe_value if alpha else 0.0


def comm_cost(alpha: int, cost: CostModel, config: GoeConfig | None = None) -> float:
    """Query spend for one slot: linear in alpha * c0."""
    return float(alpha) * cost.c0


def ngoe(delta: float, v: float, alpha: int, cost: CostModel) -> float:
    """Exponential net effectiveness score, exp(-v*delta - c0*alpha)."""
    return math.exp(-float(v) * float(delta) - cost.c0 * float(alpha))


def validate_truncation(config: GoeConfig, delta_max: int, epsilon: float) -> bool:
    """Is clamping the age at ``delta_max`` within relative slack ``epsilon``?

    True when the penalty one step before the clamp is at most (1 + epsilon)
    times the clamped penalty, so truncation loses little. Signed penalties
    (neg_linear) never satisfy this and report False.
    """
    if delta_max < 2:
        raise ValueError("delta_max must be at least 2")
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    return penalty_value(config, delta_max - 1) <= (1.0 + epsilon) * penalty_value(
        config, delta_max
    )
