"""Finite CMDP over (age, importance-rank) states with silent/pull actions.

State (delta, i) holds the age of the last correctly received update,
clamped at delta_max, and the index of its usefulness level. A pull succeeds
with probability 1 - p_eps, resetting the age to one and redrawing the level
through one step of the importance chain; a failed pull or a silent slot
ages the state in place.

Reward modes:

* ``per_slot_state``: the GoE of the successor state accrues every slot.
  This is the default for planning; it makes low-usefulness and stale states
  worth refreshing, which is what gives the solved policies their
  two-threshold structure.
* ``pull_gated``: the successor GoE accrues only on query slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .importance import ImportanceChain, ImportanceLevels, validate_chain
from .metrics import CostModel, GoeConfig, comm_cost, goe

SILENT = 0
PULL = 1

REWARD_MODES = ("per_slot_state", "pull_gated")


@dataclass(frozen=True)
class StateSpace:
    """Index bijection between (delta, level-index) pairs and flat ids."""

    delta_max: int
    levels: ImportanceLevels

    def __post_init__(self) -> None:
        if self.delta_max < 2:
            raise ValueError("delta_max must be at least 2")

    @property
    def n_states(self) -> int:
        return self.delta_max * len(self.levels)

    def index(self, delta: int, v_index: int) -> int:
        if not 1 <= delta <= self.delta_max:
            raise ValueError(f"age {delta} outside [1, {self.delta_max}]")
        k = len(self.levels)
        if not 0 <= v_index < k:
            raise ValueError(f"level index {v_index} outside [0, {k})")
        return (delta - 1) * k + v_index

    def state_of(self, idx: int) -> tuple[int, int]:
        if not 0 <= idx < self.n_states:
            raise ValueError(f"flat index {idx} outside [0, {self.n_states})")
        k = len(self.levels)
        return idx // k + 1, idx % k

    def delta_of(self, idx: int) -> int:
        return self.state_of(idx)[0]

    def v_index_of(self, idx: int) -> int:
        return self.state_of(idx)[1]


@dataclass(frozen=True)
class CmdpModel:
    """Assembled kernel and reward tables for one problem instance.

    ``kernel[a]`` is the row-stochastic transition matrix under action ``a``.
    ``state_goe[s]`` is the GoE evaluated at state ``s``; ``reward0[s, a]``
    is the expected one-step raw reward (no multiplier term) of playing
    ``a`` in ``s``; ``action_cost[a]`` the per-slot query spend.
    """

    space: StateSpace
    chain: ImportanceChain
    p_eps: float
    goe_config: GoeConfig
    cost: CostModel
    reward_mode: str
    kernel: np.ndarray
    state_goe: np.ndarray
    reward0: np.ndarray
    action_cost: np.ndarray


def build_model(
    chain: ImportanceChain,
    delta_max: int,
    p_eps: float,
    goe_config: GoeConfig | None = None,
    cost: CostModel | None = None,
    reward_mode: str = "per_slot_state",
) -> CmdpModel:
    """Validate the pieces and assemble the dense kernel and reward tables."""
    problems = [v.detail for v in validate_chain(chain)]
    if problems:
        raise ConfigError([f"importance chain: {p}" for p in problems])
    if not 0.0 <= p_eps <= 1.0:
        raise ConfigError(f"p_eps must lie within [0, 1], got {p_eps}")
    if delta_max < 2:
        raise ConfigError(f"delta_max must be at least 2, got {delta_max}")
    if reward_mode not in REWARD_MODES:
        raise ConfigError(f"reward_mode must be one of {REWARD_MODES}, got {reward_mode!r}")
    goe_config = goe_config or GoeConfig()
    cost = cost or CostModel()

    space = StateSpace(delta_max, chain.levels)
    k = len(chain.levels)
    n = space.n_states
    kernel = np.zeros((2, n, n))
    pv = chain.matrix
    ok = 1.0 - p_eps

    for delta in range(1, delta_max + 1):
        aged = min(delta + 1, delta_max)
        for i in range(k):
            s = space.index(delta, i)
            stay = space.index(aged, i)
            kernel[SILENT, s, stay] = 1.0
            kernel[PULL, s, stay] += p_eps
            row = pv[i]
            for j in range(k):
                if row[j] != 0.0:
                    kernel[PULL, s, space.index(1, j)] += row[j] * ok

    values = chain.levels.values
    state_goe = np.array(
        [goe(space.delta_of(s), values[space.v_index_of(s)], goe_config) for s in range(n)]
    )
    reward0 = np.empty((n, 2))
    reward0[:, SILENT] = kernel[SILENT] @ state_goe
    reward0[:, PULL] = kernel[PULL] @ state_goe
    if reward_mode == "pull_gated":
        reward0[:, SILENT] = 0.0
    action_cost = np.array([0.0, comm_cost(1, cost, goe_config)])
    kernel.flags.writeable = False
    state_goe.flags.writeable = False
    reward0.flags.writeable = False
    action_cost.flags.writeable = False
    return CmdpModel(
        space=space,
        chain=chain,
        p_eps=p_eps,
        goe_config=goe_config,
        cost=cost,
        reward_mode=reward_mode,
        kernel=kernel,
        state_goe=state_goe,
        reward0=reward0,
        action_cost=action_cost,
    )


def transition_prob(model: CmdpModel, s: int, alpha: int, s_next: int) -> float:
    """One transition entry, with index validation."""
    _check_action(alpha)
    n = model.space.n_states
    for idx in (s, s_next):
        if not 0 <= idx < n:
            raise ValueError(f"state index {idx} outside [0, {n})")
    return float(model.kernel[alpha, s, s_next])


def successors(model: CmdpModel, s: int, alpha: int) -> list[tuple[int, float]]:
    """Nonzero transitions out of (s, alpha) as (state, probability) pairs."""
    _check_action(alpha)
    row = model.kernel[alpha, s]
    idx = np.nonzero(row)[0]
    return [(int(j), float(row[j])) for j in idx]


def raw_reward(model: CmdpModel, alpha: int, s_next: int) -> float:
    """Reward accrued on landing in ``s_next`` after playing ``alpha``."""
    value = float(model.state_goe[s_next])
    if model.reward_mode == "pull_gated":
        return value * alpha
    return value


def net_reward(model: CmdpModel, s: int, alpha: int, s_next: int, mu: float) -> float:
    """Raw reward minus the multiplier-priced query spend."""
    _check_action(alpha)
    return raw_reward(model, alpha, s_next) - mu * float(model.action_cost[alpha])


def _check_action(alpha: int) -> None:
    if alpha not in (SILENT, PULL):
        raise ValueError(f"action must be 0 (silent) or 1 (pull), got {alpha}")
