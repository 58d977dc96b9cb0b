"""Query controllers: solved-policy, threshold-table and time-driven baselines.

A controller is anything with ``reset(rng)`` and ``decide(slot, delta,
v_index) -> int``. Solved policies act on the observed (age, level) state;
the three baselines are effect-agnostic and keyed only on time and their own
internal randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmdp import CmdpModel, StateSpace, build_model
from .errors import ThresholdStructureError
from .importance import ImportanceChain
from .metrics import CostModel, GoeConfig
from .solver import SolveOutcome, SolverConfig, StationaryPolicy, solve

BASELINE_KINDS = ("periodic", "binomial", "markovian")

# Silent-state self-transition of the markovian baseline, fixed by design.
MARKOV_P_SILENT_STAY = 0.95
MARKOV_P_SP = 1.0 - MARKOV_P_SILENT_STAY


@dataclass(frozen=True)
class ThresholdTable:
    """Two equivalent monotone views of a deterministic policy.

    ``delta_thresholds[i]`` is the smallest age at which level ``i`` pulls
    (None when that level never pulls). ``v_threshold_index[d - 1]`` is the
    largest level index that pulls at age ``d`` (None when age ``d`` is
    entirely silent). Both views decide identically on every state.
    """

    delta_max: int
    n_levels: int
    delta_thresholds: tuple[int | None, ...]
    v_threshold_index: tuple[int | None, ...]

    def decide_by_age(self, delta: int, v_index: int) -> int:
        th = self.delta_thresholds[v_index]
        return int(th is not None and delta >= th)

    def decide_by_level(self, delta: int, v_index: int) -> int:
        th = self.v_threshold_index[delta - 1]
        return int(th is not None and v_index <= th)


def extract_threshold_table(policy: StationaryPolicy, space: StateSpace) -> ThresholdTable:
    """Recover the two-threshold form of a deterministic policy.

    Verifies monotone structure in both directions: once a level pulls at
    some age it pulls at every larger age, and at a fixed age the pull set
    is a downward-closed set of levels. Raises ThresholdStructureError with
    the offending state pairs otherwise; randomized policies are rejected
    outright.
    """
    if not policy.is_deterministic:
        raise ValueError(
            "threshold extraction needs a deterministic policy; "
            "extract from the two unmixed endpoint policies instead"
        )
    k = len(space.levels)
    grid = policy.pull_prob.reshape(space.delta_max, k).astype(bool)

    violations: list[tuple] = []
    for i in range(k):
        col = grid[:, i]
        for d in range(1, space.delta_max):
            if col[d - 1] and not col[d]:
                violations.append(((d, i), (d + 1, i)))
    for d in range(space.delta_max):
        row = grid[d]
        for i in range(1, k):
            if row[i] and not row[i - 1]:
                violations.append(((d + 1, i - 1), (d + 1, i)))
    if violations:
        raise ThresholdStructureError(
            f"policy is not threshold-representable; {len(violations)} "
            "state pair(s) violate monotonicity",
            violations,
        )

    delta_th: list[int | None] = []
    for i in range(k):
        hits = np.flatnonzero(grid[:, i])
        delta_th.append(int(hits[0]) + 1 if hits.size else None)
    v_th: list[int | None] = []
    for d in range(space.delta_max):
        hits = np.flatnonzero(grid[d])
        v_th.append(int(hits[-1]) if hits.size else None)

    table = ThresholdTable(
        delta_max=space.delta_max,
        n_levels=k,
        delta_thresholds=tuple(delta_th),
        v_threshold_index=tuple(v_th),
    )
    for d in range(1, space.delta_max + 1):
        for i in range(k):
            assert table.decide_by_age(d, i) == grid[d - 1, i]
            assert table.decide_by_level(d, i) == grid[d - 1, i]
    return table


def threshold_decide(table: ThresholdTable, delta: int, v_index: int) -> int:
    """Age-threshold decision rule; identical to the level-threshold view."""
    if not 1 <= delta <= table.delta_max:
        raise ValueError(f"age {delta} outside [1, {table.delta_max}]")
    if not 0 <= v_index < table.n_levels:
        raise ValueError(f"level index {v_index} outside [0, {table.n_levels})")
    return table.decide_by_age(delta, v_index)


@dataclass
class StatePolicyController:
    """Plays a stationary (possibly randomized) policy on the observed state."""

    policy: StationaryPolicy
    space: StateSpace
    name: str = "effect_aware"
    _rng: np.random.Generator | None = field(default=None, repr=False)

    def reset(self, rng: np.random.Generator) -> None:
        self._rng = rng

    def decide(self, slot: int, delta: int, v_index: int) -> int:
        p = float(self.policy.pull_prob[self.space.index(delta, v_index)])
        if p == 0.0:
            return 0
        if p == 1.0:
            return 1
        if self._rng is None:
            raise RuntimeError("controller used before reset()")
        return int(self._rng.random() < p)


@dataclass
class ThresholdController:
    """Deterministic controller driven by an extracted threshold table."""

    table: ThresholdTable
    name: str = "threshold"

    def reset(self, rng: np.random.Generator) -> None:
        pass

    def decide(self, slot: int, delta: int, v_index: int) -> int:
        return threshold_decide(self.table, delta, v_index)


@dataclass
class PeriodicController:
    """Pulls every ``period`` slots, first pull on slot 1."""

    period: int
    name: str = "periodic"

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ValueError("period must be a positive integer")

    @property
    def effective_rate(self) -> float:
        return 1.0 / self.period

    def reset(self, rng: np.random.Generator) -> None:
        pass

    def decide(self, slot: int, delta: int, v_index: int) -> int:
        return int((slot - 1) % self.period == 0)


@dataclass
class BinomialController:
    """Independent Bernoulli(rate) query each slot."""

    rate: float
    name: str = "binomial"
    _rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must lie within [0, 1]")

    def reset(self, rng: np.random.Generator) -> None:
        self._rng = rng

    def decide(self, slot: int, delta: int, v_index: int) -> int:
        if self._rng is None:
            raise RuntimeError("controller used before reset()")
        return int(self._rng.random() < self.rate)


@dataclass
class MarkovianController:
    """Two-state (silent/pull) chain with bursty queries.

    The silent self-transition is fixed at 0.95; the pull self-transition is
    set so the stationary pull share equals ``rate``. Feasible only for
    rate >= 0.05 / 1.05. Starts silent; the slot's action is the current
    chain state, then the chain steps.
    """

    rate: float
    name: str = "markovian"
    _state: int = field(default=0, repr=False)
    _rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        lo = markovian_min_rate()
        if not lo <= self.rate <= 1.0:
            raise ValueError(
                f"markovian rate must lie within [{lo:.6f}, 1]; got {self.rate}"
            )

    @property
    def p_pull_stay(self) -> float:
        return 1.0 - MARKOV_P_SP * (1.0 - self.rate) / self.rate

    def reset(self, rng: np.random.Generator) -> None:
        self._rng = rng
        self._state = 0

    def decide(self, slot: int, delta: int, v_index: int) -> int:
        if self._rng is None:
            raise RuntimeError("controller used before reset()")
        alpha = self._state
        stay = MARKOV_P_SILENT_STAY if alpha == 0 else self.p_pull_stay
        if self._rng.random() >= stay:
            self._state = 1 - alpha
        return alpha


def markovian_min_rate() -> float:
    """Smallest stationary pull rate the two-state baseline can realize."""
    return MARKOV_P_SP / (MARKOV_P_SP + 1.0)


def make_baseline(kind: str, rate: float, seed: int = 0):
    """Build a time-driven baseline bound to its own generator.

    The returned controller is immediately usable; simulator runs rebind it
    to their controller substream through reset().
    """
    if kind == "periodic":
        if not 0.0 < rate <= 1.0:
            raise ValueError("periodic rate must lie within (0, 1]")
        ctrl = PeriodicController(period=max(1, round(1.0 / rate)))
    elif kind == "binomial":
        ctrl = BinomialController(rate=rate)
    elif kind == "markovian":
        ctrl = MarkovianController(rate=rate)
    else:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    ctrl.reset(np.random.default_rng(np.random.SeedSequence(seed)))
    return ctrl


def special_case_policy(
    case: str,
    chain: ImportanceChain,
    delta_max: int,
    p_eps: float,
    cost: CostModel,
    c_max: float,
    solver_config: SolverConfig | None = None,
    reward_mode: str = "per_slot_state",
    base_goe: GoeConfig | None = None,
) -> tuple[SolveOutcome, CmdpModel]:
    """Solve the age-only (qaoi) or usefulness-only (voi) reduction.

    The reduction keeps the base penalty/utility shapes and swaps the
    composition rule, so "qaoi" rewards freshness regardless of usefulness
    and "voi" rewards usefulness regardless of age.
    """
    base = base_goe or GoeConfig()
    if case == "qaoi":
        goe_config = GoeConfig(
            penalty=base.penalty,
            utility=base.utility,
            compose="penalty_only",
            cost=base.cost,
            decay_rate=base.decay_rate,
        )
    elif case == "voi":
        goe_config = GoeConfig(
            penalty=base.penalty,
            utility=base.utility,
            compose="utility_only",
            cost=base.cost,
            decay_rate=base.decay_rate,
        )
    else:
        raise ValueError(f"unknown special case {case!r}; expected 'qaoi' or 'voi'")
    model = build_model(chain, delta_max, p_eps, goe_config, cost, reward_mode)
    return solve(model, c_max, solver_config), model
