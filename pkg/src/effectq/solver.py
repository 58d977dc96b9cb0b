"""Average-reward planning: relative value iteration inside, bisection outside.

The budgeted query-control problem is solved Lagrangian-style. For a fixed
multiplier mu, the net reward is raw reward minus mu times query spend and
relative value iteration finds a gain-optimal stationary deterministic
policy. The outer loop bisects on mu between a bracket whose lower end spends
at least the budget and whose upper end spends strictly less, then blends the
two endpoint policies into a stationary mixture that meets the budget.

Stopping rules. The inner loop re-centers the value vector at a fixed
reference state each sweep and stops when the span seminorm (max minus min)
of successive differences falls below eps_v. A plain max-abs criterion on
differences cannot fire under a nonzero gain, the iterates drift by the gain
each sweep; the span collapses regardless and bounds the gain estimate. The
outer loop halves the bracket until its width is at most eps_mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from .cmdp import PULL, SILENT, CmdpModel
from .errors import (
    BracketError,
    ConvergenceError,
    InfeasibleBudgetError,
    MultichainError,
)

TIE_TOL = 1e-12
MU_CAP = 2.0**20
ETA_MODES = ("cost_matched", "fixed")


@dataclass
class SolverConfig:
    """Tolerances and limits for the two nested loops.

    ``mu_hi`` of None auto-scales from the reward magnitude and doubles
    until the bracket holds; an explicit value is trusted as given.
    ``eta_mode`` picks how the endpoint policies are blended: "cost_matched"
    root-finds the weight so the mixture spends the budget exactly, "fixed"
    uses ``eta`` as given.
    """

    eps_v: float = 1e-3
    eps_mu: float = 1e-3
    mu_lo: float = 0.0
    mu_hi: float | None = None
    eta_mode: str = "cost_matched"
    eta: float = 0.5
    max_inner_iters: int = 100_000
    max_outer_steps: int = 60

    def __post_init__(self) -> None:
        if self.eps_v <= 0 or self.eps_mu <= 0:
            raise ValueError("eps_v and eps_mu must be positive")
        if self.mu_lo < 0:
            raise ValueError("mu_lo must be nonnegative")
        if self.mu_hi is not None and self.mu_hi <= self.mu_lo:
            raise ValueError("mu_hi must exceed mu_lo")
        if self.eta_mode not in ETA_MODES:
            raise ValueError(f"unknown eta_mode {self.eta_mode!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie within [0, 1]")
        if self.max_inner_iters < 1 or self.max_outer_steps < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class ValueFunction:
    """Relative values (pinned to zero at the reference state) plus gain.

    ``gain_trace`` and ``span_trace`` record the per-sweep gain estimate and
    span of successive differences, in sweep order.
    """

    values: np.ndarray
    gain: float
    gain_trace: list[float] = field(default_factory=list)
    span_trace: list[float] = field(default_factory=list)


@dataclass
class StationaryPolicy:
    """Per-state pull probabilities. Deterministic policies are 0/1 vectors."""

    pull_prob: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pull_prob, dtype=float)
        if arr.ndim != 1:
            raise ValueError("pull_prob must be a 1-D vector")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("pull probabilities must lie within [0, 1]")
        self.pull_prob = arr

    @property
    def is_deterministic(self) -> bool:
        p = self.pull_prob
        return bool(np.all((p == 0.0) | (p == 1.0)))

    def as_table(self, space) -> np.ndarray:
        """Pull probabilities reshaped to rows of age, columns of level."""
        return self.pull_prob.reshape(space.delta_max, len(space.levels)).copy()


@dataclass
class SolveOutcome:
    """Everything the budgeted solve produced, including both bracket ends."""

    mu_star: float
    policy: StationaryPolicy
    eta_used: float | None
    achieved_cost: float
    achieved_goe: float
    inner_iteration_counts: list[int]
    value_trace: list[float]
    span_trace: list[float]
    policy_lo: StationaryPolicy | None
    policy_hi: StationaryPolicy | None
    mu_lo: float
    mu_hi: float
    bracket_history: list[tuple[float, float, float, float]]
    outer_steps: int
    warning: str | None = None


def sweep_operation_count(model: CmdpModel) -> int:
    """Multiply-adds one value-iteration sweep performs (kernel nonzeros)."""
    return int(np.count_nonzero(model.kernel[SILENT])) + int(
        np.count_nonzero(model.kernel[PULL])
    )


def relative_value_iteration(
    model: CmdpModel, mu: float, config: SolverConfig | None = None
) -> tuple[ValueFunction, StationaryPolicy, int]:
    """Gain-optimal deterministic policy for the mu-priced net reward.

    Sweeps the Bellman operator over the sparse kernel, re-centering at flat
    state 0, until the span of successive differences is at most eps_v. Ties
    between actions (within TIE_TOL) resolve to silent.
    """
    config = config or SolverConfig()
    p0 = sp.csr_matrix(model.kernel[SILENT])
    p1 = sp.csr_matrix(model.kernel[PULL])
    r0 = model.reward0[:, SILENT] - mu * model.action_cost[SILENT]
    r1 = model.reward0[:, PULL] - mu * model.action_cost[PULL]

    n = model.space.n_states
    v = np.zeros(n)
    gain_trace: list[float] = []
    span_trace: list[float] = []
    iterations = 0
    converged = False
    for _ in range(config.max_inner_iters):
        iterations += 1
        w = np.maximum(r0 + p0 @ v, r1 + p1 @ v)
        diff = w - v
        hi = float(diff.max())
        lo = float(diff.min())
        span = hi - lo
        gain_trace.append(0.5 * (hi + lo))
        span_trace.append(span)
        v = w - w[0]
        if span <= config.eps_v:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"value iteration did not converge in {config.max_inner_iters} sweeps "
            f"(last span {span_trace[-1]:.3e})",
            span=span_trace[-1],
        )

    q0 = r0 + p0 @ v
    q1 = r1 + p1 @ v
    pull = (q1 - q0) > TIE_TOL
    policy = StationaryPolicy(pull.astype(float))
    vf = ValueFunction(values=v, gain=gain_trace[-1], gain_trace=gain_trace, span_trace=span_trace)
    return vf, policy, iterations


def greedy_policy(model: CmdpModel, mu: float, values: np.ndarray) -> StationaryPolicy:
    """One-step lookahead argmax against a fixed value vector."""
    q0 = model.reward0[:, SILENT] - mu * model.action_cost[SILENT] + model.kernel[SILENT] @ values
    q1 = model.reward0[:, PULL] - mu * model.action_cost[PULL] + model.kernel[PULL] @ values
    return StationaryPolicy(((q1 - q0) > TIE_TOL).astype(float))


def induced_matrix(model: CmdpModel, policy: StationaryPolicy) -> np.ndarray:
    p = policy.pull_prob
    return (1.0 - p)[:, None] * model.kernel[SILENT] + p[:, None] * model.kernel[PULL]


def _class_partition(pmat: np.ndarray) -> tuple[np.ndarray, list[int]]:
    _, labels = connected_components(
        sp.csr_matrix(pmat > 0.0), directed=True, connection="strong"
    )
    return labels, _closed_classes(pmat, labels)


def policy_stationary_distribution(model: CmdpModel, policy: StationaryPolicy) -> np.ndarray:
    """Exact stationary distribution of the chain a policy induces.

    The chain must be unichain: exactly one closed recurrent class. The
    distribution is solved densely on that class; transient states carry
    probability zero.
    """
    pmat = induced_matrix(model, policy)
    n = pmat.shape[0]
    labels, closed = _class_partition(pmat)
    if len(closed) != 1:
        raise MultichainError(
            f"policy induces {len(closed)} closed recurrent classes; expected one"
        )
    members = np.flatnonzero(labels == closed[0])
    rho = np.zeros(n)
    rho[members] = _stationary_on_class(pmat, members)
    return rho


def policy_class_metrics(
    model: CmdpModel, policy: StationaryPolicy
) -> list[tuple[np.ndarray, float, float]]:
    """Per-closed-class (members, average cost, average reward) triples.

    Policies that silence whole regions can trap the chain in several closed
    classes, where long-run averages depend on the start. This enumerates
    them; callers that need a single number pick a convention.
    """
    pmat = induced_matrix(model, policy)
    labels, closed = _class_partition(pmat)
    p = policy.pull_prob
    per_state_reward = (1.0 - p) * model.reward0[:, SILENT] + p * model.reward0[:, PULL]
    out = []
    for c in closed:
        members = np.flatnonzero(labels == c)
        rho = _stationary_on_class(pmat, members)
        spend = float(rho @ (p[members] * model.action_cost[PULL]))
        reward = float(rho @ per_state_reward[members])
        out.append((members, spend, reward))
    return out


def _worst_case_metrics(model: CmdpModel, policy: StationaryPolicy) -> tuple[float, float, bool]:
    """(cost, reward, multichain flag) using the costliest closed class."""
    per_class = policy_class_metrics(model, policy)
    cost, reward = max((c, r) for _, c, r in per_class)
    return cost, reward, len(per_class) > 1


def _closed_classes(pmat: np.ndarray, labels: np.ndarray) -> list[int]:
    n_comp = int(labels.max()) + 1
    leaks = np.zeros(n_comp, dtype=bool)
    rows, cols = np.nonzero(pmat)
    leak_edges = labels[rows] != labels[cols]
    leaks[labels[rows[leak_edges]]] = True
    return [c for c in range(n_comp) if not leaks[c]]


def _stationary_on_class(pmat: np.ndarray, members: np.ndarray) -> np.ndarray:
    sub = pmat[np.ix_(members, members)]
    m = sub.shape[0]
    a = sub.T - np.eye(m)
    system = np.vstack([a[:-1], np.ones(m)])
    b = np.zeros(m)
    b[-1] = 1.0
    rho = np.linalg.solve(system, b)
    return np.where(np.abs(rho) < 1e-15, 0.0, rho)


def average_cost(model: CmdpModel, policy: StationaryPolicy) -> float:
    """Long-run query spend per slot under the policy's stationary law."""
    rho = policy_stationary_distribution(model, policy)
    return float(rho @ (policy.pull_prob * model.action_cost[PULL]))


def average_reward(model: CmdpModel, policy: StationaryPolicy) -> float:
    """Long-run raw (unpriced) reward per slot."""
    rho = policy_stationary_distribution(model, policy)
    p = policy.pull_prob
    per_state = (1.0 - p) * model.reward0[:, SILENT] + p * model.reward0[:, PULL]
    return float(rho @ per_state)


def mix(
    pi_minus: StationaryPolicy,
    pi_plus: StationaryPolicy,
    model: CmdpModel,
    c_max: float,
    eta_mode: str = "cost_matched",
    eta: float = 0.5,
) -> tuple[StationaryPolicy, float, str | None]:
    """Blend the bracket policies: eta * pi_minus + (1 - eta) * pi_plus.

    cost_matched root-finds eta so the blend's exact average cost equals the
    budget; when the endpoint costs do not straddle the budget it falls back
    to the endpoint nearest the budget from below and flags a warning. A
    fixed eta whose blend overspends falls back the same way.
    """

    def blend(e: float) -> StationaryPolicy:
        return StationaryPolicy(e * pi_minus.pull_prob + (1.0 - e) * pi_plus.pull_prob)

    def spend(e: float) -> float:
        # Endpoint policies can be multichain (a never-pull endpoint traps
        # each level in its own class); interior blends inherit pi_minus's
        # pull edges, so only the endpoints need the worst-case convention.
        if e in (0.0, 1.0):
            return _worst_case_metrics(model, blend(e))[0]
        return average_cost(model, blend(e))

    if eta_mode == "fixed":
        pol = blend(eta)
        if spend(eta) <= c_max + 1e-9:
            return pol, eta, None
        return (
            StationaryPolicy(pi_plus.pull_prob.copy()),
            0.0,
            "fixed-eta blend overspent the budget; returned the feasible endpoint",
        )

    cost_plus = spend(0.0)
    cost_minus = spend(1.0)
    if cost_plus > c_max or cost_minus < c_max:
        candidates = [(0.0, cost_plus), (1.0, cost_minus)]
        feasible = [c for c in candidates if c[1] <= c_max]
        if feasible:
            pick = max(feasible, key=lambda c: c[1])
        else:
            pick = min(candidates, key=lambda c: c[1])
        return (
            blend(pick[0]),
            pick[0],
            "endpoint costs do not straddle the budget; returned the nearest endpoint",
        )
    if cost_minus == c_max:
        return blend(1.0), 1.0, None
    eta_star = float(brentq(lambda e: spend(e) - c_max, 0.0, 1.0, xtol=1e-12))
    return blend(eta_star), eta_star, None


def bisect_multiplier(
    model: CmdpModel, c_max: float, config: SolverConfig | None = None
) -> SolveOutcome:
    """Smallest multiplier whose policy meets the budget, plus the blend.

    Runs the unconstrained solve at mu_lo first and returns it outright when
    it already fits the budget. Otherwise establishes a bracket (doubling an
    auto-scaled mu_hi when none was given), halves it to width eps_mu while
    costs are evaluated exactly from each policy's stationary law, and blends
    the final endpoint policies.
    """
    if c_max < 0:
        raise ValueError("c_max must be nonnegative")
    config = config or SolverConfig()

    inner_counts: list[int] = []
    solved: dict[float, tuple[ValueFunction, StationaryPolicy, float]] = {}

    def utility(mu: float) -> tuple[ValueFunction, StationaryPolicy, float]:
        if mu not in solved:
            vf, pol, iters = relative_value_iteration(model, mu, config)
            inner_counts.append(iters)
            # Worst case over closed classes: identical to the exact average
            # for unichain policies, and a safe feasibility screen otherwise.
            solved[mu] = (vf, pol, _worst_case_metrics(model, pol)[0])
        return solved[mu]

    mu_lo = config.mu_lo
    vf, pol_lo, cost_lo = utility(mu_lo)
    if cost_lo <= c_max:
        return SolveOutcome(
            mu_star=mu_lo,
            policy=pol_lo,
            eta_used=None,
            achieved_cost=cost_lo,
            achieved_goe=_worst_case_metrics(model, pol_lo)[1],
            inner_iteration_counts=inner_counts,
            value_trace=vf.gain_trace,
            span_trace=vf.span_trace,
            policy_lo=pol_lo,
            policy_hi=None,
            mu_lo=mu_lo,
            mu_hi=mu_lo,
            bracket_history=[],
            outer_steps=0,
        )

    if model.action_cost[PULL] <= 0.0:
        raise InfeasibleBudgetError(
            "query spend is over budget yet pulls are free; no multiplier can help"
        )

    if config.mu_hi is not None:
        mu_hi = config.mu_hi
        vf_hi, pol_hi, cost_hi = utility(mu_hi)
        if cost_hi > c_max:
            raise BracketError(
                f"cost at mu_hi={mu_hi} is {cost_hi:.6f}, still over budget {c_max}; "
                "raise mu_hi"
            )
    else:
        mu_hi = 8.0 * float(np.abs(model.reward0).max()) / float(model.action_cost[PULL])
        vf_hi, pol_hi, cost_hi = utility(mu_hi)
        while cost_hi > c_max:
            mu_hi *= 2.0
            if mu_hi > MU_CAP:
                raise InfeasibleBudgetError(
                    f"no multiplier up to {MU_CAP} brings the cost under budget "
                    f"{c_max}; the cost floor appears to exceed the budget"
                )
            vf_hi, pol_hi, cost_hi = utility(mu_hi)

    bracket_width0 = mu_hi - mu_lo
    history: list[tuple[float, float, float, float]] = [(mu_lo, mu_hi, cost_lo, cost_hi)]
    steps = 0
    mu_star = mu_hi
    last_vf = vf_hi
    while mu_hi - mu_lo > config.eps_mu:
        if steps >= config.max_outer_steps:
            raise ConvergenceError(
                f"bisection exceeded {config.max_outer_steps} outer steps "
                f"(bracket width {mu_hi - mu_lo:.3e})"
            )
        steps += 1
        mu_mid = 0.5 * (mu_lo + mu_hi)
        vf_mid, pol_mid, cost_mid = utility(mu_mid)
        mu_star = mu_mid
        last_vf = vf_mid
        if cost_mid >= c_max:
            mu_lo, pol_lo, cost_lo = mu_mid, pol_mid, cost_mid
        else:
            mu_hi, pol_hi, cost_hi = mu_mid, pol_mid, cost_mid
        history.append((mu_lo, mu_hi, cost_lo, cost_hi))

    assert steps <= math.ceil(math.log2(max(bracket_width0 / config.eps_mu, 1.0)))

    final, eta_used, warning = mix(
        pol_lo, pol_hi, model, c_max, eta_mode=config.eta_mode, eta=config.eta
    )
    final_cost, final_reward, split = _worst_case_metrics(model, final)
    if split:
        note = "returned policy is multichain; reported averages use the costliest class"
        warning = f"{warning}; {note}" if warning else note
    return SolveOutcome(
        mu_star=mu_star,
        policy=final,
        eta_used=eta_used,
        achieved_cost=final_cost,
        achieved_goe=final_reward,
        inner_iteration_counts=inner_counts,
        value_trace=last_vf.gain_trace,
        span_trace=last_vf.span_trace,
        policy_lo=pol_lo,
        policy_hi=pol_hi,
        mu_lo=mu_lo,
        mu_hi=mu_hi,
        bracket_history=history,
        outer_steps=steps,
        warning=warning,
    )


def solve(model: CmdpModel, c_max: float, config: SolverConfig | None = None) -> SolveOutcome:
    """Budgeted solve: bisect the multiplier and blend the bracket policies."""
    return bisect_multiplier(model, c_max, config)
