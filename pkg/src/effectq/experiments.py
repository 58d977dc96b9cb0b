"""Scripted evaluation harness: snapshot, CDF, rate sweeps, convergence, thresholds.

Every runner writes delimited tables under a results directory and returns
the written paths. Output is reproducible bit for bit from (config, seed):
rows are assembled in grid order regardless of worker scheduling, and all
floats pass through one canonical formatter.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cmdp import CmdpModel, build_model
from .errors import MultichainError
from .importance import ImportanceChain
from .metrics import CostModel, GoeConfig
from .policies import (
    StatePolicyController,
    extract_threshold_table,
    make_baseline,
    special_case_policy,
)
from .simulator import SimConfig, SimSummary, replicate, run
from .solver import (
    SolveOutcome,
    SolverConfig,
    StationaryPolicy,
    policy_stationary_distribution,
    solve,
)

SOLVED_LABELS = ("effect_aware", "qaoi", "voi")
BASELINE_LABELS = ("periodic", "binomial", "markovian")

DEFAULT_RATES = tuple(round(0.1 * k, 1) for k in range(1, 11))
DEFAULT_COST_COEFFS = (0.1, 0.5, 1.0)

SNAPSHOT_FILE = "fig2_snapshot.csv"
CDF_FILE = "fig3_cdf.csv"
SWEEP_FILE_TEMPLATE = "fig4_sweep_c{label}.csv"
CONVERGENCE_FILE = "fig5_convergence.csv"
THRESHOLD_FILE_TEMPLATE = "table1_thresholds_c{label}.csv"


def format_float(value: float | None) -> str:
    """Canonical cell formatting; None and NaN render as empty cells."""
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return ""
    return f"{v:.12g}"


@dataclass(frozen=True)
class SweepSpec:
    """Grid for the rate sweep; budgets follow the mapping C_max = rate * c0."""

    rates: tuple[float, ...] = DEFAULT_RATES
    cost_coeffs: tuple[float, ...] = DEFAULT_COST_COEFFS
    replications: int = 30
    n_slots: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.rates:
            raise ValueError("rate grid must not be empty")
        if any(not 0.0 < q <= 1.0 for q in self.rates):
            raise ValueError("rates must lie within (0, 1]")
        if any(c <= 0.0 for c in self.cost_coeffs):
            raise ValueError("cost coefficients must be positive")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.n_slots < 1:
            raise ValueError("n_slots must be positive")

    def budgets(self, c0: float) -> tuple[float, ...]:
        return tuple(q * c0 for q in self.rates)


@dataclass(frozen=True)
class ResultRow:
    policy: str
    rate: float
    c0: float
    mean_ngoe: float
    se_ngoe: float
    mean_query_rate: float
    mean_cost: float
    analytical_ngoe: float | None
    status: str
    seed: int
    config_hash: str

    def __post_init__(self) -> None:
        if not math.isnan(self.se_ngoe) and self.se_ngoe < 0.0:
            raise ValueError("standard error must be nonnegative")

    @staticmethod
    def header() -> list[str]:
        return [
            "policy",
            "rate",
            "c0",
            "mean_ngoe",
            "se_ngoe",
            "mean_query_rate",
            "mean_cost",
            "analytical_ngoe",
            "status",
            "seed",
            "config_hash",
        ]

    def cells(self) -> list[str]:
        return [
            self.policy,
            format_float(self.rate),
            format_float(self.c0),
            format_float(self.mean_ngoe),
            format_float(self.se_ngoe),
            format_float(self.mean_query_rate),
            format_float(self.mean_cost),
            format_float(self.analytical_ngoe),
            self.status,
            str(self.seed),
            self.config_hash,
        ]


@dataclass(frozen=True)
class ExperimentSetup:
    """Shared model context threaded through every runner."""

    chain: ImportanceChain
    delta_max: int = 10
    p_eps: float = 0.2
    goe_config: GoeConfig = field(default_factory=GoeConfig)
    reward_mode: str = "per_slot_state"
    source_mode: str = "model_consistent"
    solver: SolverConfig = field(default_factory=SolverConfig)
    config_hash: str = ""


def solve_labelled(
    setup: ExperimentSetup, label: str, c0: float, c_max: float
) -> tuple[SolveOutcome, CmdpModel]:
    """Solve the full objective or one of its single-attribute reductions."""
    cost = CostModel(c0)
    if label == "effect_aware":
        model = build_model(
            setup.chain, setup.delta_max, setup.p_eps, setup.goe_config, cost, setup.reward_mode
        )
        return solve(model, c_max, setup.solver), model
    if label in ("qaoi", "voi"):
        return special_case_policy(
            label,
            setup.chain,
            setup.delta_max,
            setup.p_eps,
            cost,
            c_max,
            setup.solver,
            setup.reward_mode,
            setup.goe_config,
        )
    raise ValueError(f"unknown solved-policy label {label!r}")


def analytical_ngoe(model: CmdpModel, policy: StationaryPolicy, c0: float) -> float | None:
    """Stationary-law average of exp(-v*delta - c0*alpha) for a state policy.

    Returns None when the induced chain is multichain, where the long-run
    average depends on the start.
    """
    try:
        rho = policy_stationary_distribution(model, policy)
    except MultichainError:
        return None
    space = model.space
    idx = np.arange(space.n_states)
    deltas = idx // len(space.levels.values) + 1
    values = np.asarray(space.levels.values)[idx % len(space.levels.values)]
    p = policy.pull_prob
    per_state = np.exp(-values * deltas) * ((1.0 - p) + p * math.exp(-c0))
    return float(rho @ per_state)


def _sim_config(setup: ExperimentSetup, c0: float, n_slots: int, seed: int) -> SimConfig:
    return SimConfig(
        chain=setup.chain,
        delta_max=setup.delta_max,
        p_eps=setup.p_eps,
        cost=CostModel(c0),
        goe_config=setup.goe_config,
        n_slots=n_slots,
        seed=seed,
        source_mode=setup.source_mode,
    )


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> Path:
    import csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def run_snapshot(
    setup: ExperimentSetup,
    out_dir: str | Path,
    c0: float = 0.5,
    budget: float = 0.4,
    period: int = 7,
    n_slots: int = 50,
    seed: int = 0,
    plots: bool = False,
) -> list[Path]:
    """Short aligned traces: solved controller next to a fixed-period one."""
    outcome, model = solve_labelled(setup, "effect_aware", c0, budget)
    controllers = [
        ("effect_aware", StatePolicyController(outcome.policy, model.space)),
        ("periodic", make_baseline("periodic", 1.0 / period, seed)),
    ]
    rows: list[list[str]] = []
    for label, controller in controllers:
        _, trace = run(_sim_config(setup, c0, n_slots, seed), controller, collect_trace=True)
        levels = np.asarray(setup.chain.levels.values)
        for i in range(n_slots):
            rec = trace.row(i)
            rows.append(
                [
                    label,
                    str(rec.slot),
                    str(rec.alpha),
                    str(rec.success),
                    str(rec.delta),
                    format_float(float(levels[rec.v_index])),
                    format_float(rec.ngoe),
                ]
            )
    path = _write_csv(
        Path(out_dir) / SNAPSHOT_FILE,
        ["policy", "slot", "alpha", "success", "delta", "v_m", "ngoe"],
        rows,
    )
    written = [path]
    if plots:
        from . import plotting

        written.append(plotting.plot_snapshot(path))
    return written


def run_cdf(
    setup: ExperimentSetup,
    out_dir: str | Path,
    c0: float = 0.5,
    rate: float = 0.8,
    replications: int = 30,
    n_slots: int = 1000,
    seed: int = 0,
    plots: bool = False,
) -> list[Path]:
    """Replication-level score distributions at one operating point.

    All policies see identical per-replication source and channel draws, so
    differences are attributable to the query decisions alone. Measured mean
    gains of the solved controller over each baseline go to stdout.
    """
    budget = rate * c0
    sim = _sim_config(setup, c0, n_slots, seed)
    collected: list[tuple[str, list[SimSummary]]] = []
    for label in SOLVED_LABELS:
        outcome, model = solve_labelled(setup, label, c0, budget)
        factory = lambda o=outcome, m=model: StatePolicyController(o.policy, m.space)
        collected.append((label, replicate(sim, factory, replications)))
    for kind in BASELINE_LABELS:
        factory = lambda k=kind: make_baseline(k, rate, seed)
        collected.append((kind, replicate(sim, factory, replications)))

    rows: list[list[str]] = []
    for label, summaries in collected:
        order = sorted(range(len(summaries)), key=lambda i: (summaries[i].avg_ngoe, i))
        for rank, i in enumerate(order):
            s = summaries[i]
            rows.append(
                [
                    label,
                    str(i),
                    str(s.seed),
                    format_float(s.avg_ngoe),
                    format_float(s.query_rate),
                    format_float(s.avg_cost),
                    format_float((rank + 1) / len(summaries)),
                ]
            )
    path = _write_csv(
        Path(out_dir) / CDF_FILE,
        ["policy", "replication", "seed", "avg_ngoe", "query_rate", "avg_cost", "cdf"],
        rows,
    )

    by_label = {label: summaries for label, summaries in collected}
    ea_ngoe = float(np.mean([s.avg_ngoe for s in by_label["effect_aware"]]))
    ea_rate = float(np.mean([s.query_rate for s in by_label["effect_aware"]]))
    baseline_rates = []
    for kind in BASELINE_LABELS:
        base = float(np.mean([s.avg_ngoe for s in by_label[kind]]))
        baseline_rates.append(float(np.mean([s.query_rate for s in by_label[kind]])))
        gain = (ea_ngoe / base - 1.0) * 100.0 if base > 0 else float("inf")
        print(f"effect_aware vs {kind}: {gain:+.1f}% mean NGoE "
              f"({ea_ngoe:.4f} vs {base:.4f})")
    mean_base_rate = float(np.mean(baseline_rates))
    if mean_base_rate > 0:
        overhead = (ea_rate / mean_base_rate - 1.0) * 100.0
        print(f"effect_aware query-rate overhead vs baseline mean: {overhead:+.1f}%")

    written = [path]
    if plots:
        from . import plotting

        written.append(plotting.plot_cdf(path))
    return written


def _aggregate_row(
    label: str,
    rate: float,
    c0: float,
    summaries: list[SimSummary],
    analytical: float | None,
    spec: SweepSpec,
    setup: ExperimentSetup,
) -> ResultRow:
    ngoes = np.array([s.avg_ngoe for s in summaries])
    se = float(ngoes.std(ddof=1) / math.sqrt(len(ngoes))) if len(ngoes) > 1 else 0.0
    return ResultRow(
        policy=label,
        rate=rate,
        c0=c0,
        mean_ngoe=float(ngoes.mean()),
        se_ngoe=se,
        mean_query_rate=float(np.mean([s.query_rate for s in summaries])),
        mean_cost=float(np.mean([s.avg_cost for s in summaries])),
        analytical_ngoe=analytical,
        status="ok",
        seed=spec.seed,
        config_hash=setup.config_hash,
    )


def _infeasible_row(label: str, rate: float, c0: float, spec: SweepSpec, setup: ExperimentSetup) -> ResultRow:
    nan = float("nan")
    return ResultRow(
        policy=label,
        rate=rate,
        c0=c0,
        mean_ngoe=nan,
        se_ngoe=nan,
        mean_query_rate=nan,
        mean_cost=nan,
        analytical_ngoe=None,
        status="infeasible",
        seed=spec.seed,
        config_hash=setup.config_hash,
    )


def sweep_point(args: tuple[ExperimentSetup, SweepSpec, float, float]) -> list[ResultRow]:
    """All policy rows for one (c0, rate) grid point; picklable for pools."""
    setup, spec, c0, rate = args
    sim = _sim_config(setup, c0, spec.n_slots, spec.seed)
    rows: list[ResultRow] = []
    for label in SOLVED_LABELS:
        outcome, model = solve_labelled(setup, label, c0, rate * c0)
        factory = lambda o=outcome, m=model: StatePolicyController(o.policy, m.space)
        summaries = replicate(sim, factory, spec.replications)
        rows.append(
            _aggregate_row(
                label, rate, c0, summaries,
                analytical_ngoe(model, outcome.policy, c0), spec, setup,
            )
        )
    eval_model = build_model(
        setup.chain, setup.delta_max, setup.p_eps, setup.goe_config,
        CostModel(c0), setup.reward_mode,
    )
    for kind in BASELINE_LABELS:
        try:
            make_baseline(kind, rate, spec.seed)
        except ValueError:
            rows.append(_infeasible_row(kind, rate, c0, spec, setup))
            continue
        factory = lambda k=kind: make_baseline(k, rate, spec.seed)
        summaries = replicate(sim, factory, spec.replications)
        analytical = None
        if kind == "binomial":
            # A coin flip each slot is the constant randomized state policy.
            analytical = analytical_ngoe(
                eval_model,
                StationaryPolicy(np.full(eval_model.space.n_states, rate)),
                c0,
            )
        rows.append(_aggregate_row(kind, rate, c0, summaries, analytical, spec, setup))
    return rows


def run_rate_sweep(
    setup: ExperimentSetup,
    out_dir: str | Path,
    spec: SweepSpec | None = None,
    jobs: int = 1,
    plots: bool = False,
) -> list[Path]:
    """Mean scores across the rate grid, one table per cost coefficient."""
    spec = spec or SweepSpec()
    points = [(c0, q) for c0 in spec.cost_coeffs for q in spec.rates]
    args = [(setup, spec, c0, q) for c0, q in points]
    if jobs == 1:
        results = [sweep_point(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(sweep_point, args))

    written: list[Path] = []
    for c0 in spec.cost_coeffs:
        rows: list[list[str]] = []
        for (pc0, _), point_rows in zip(points, results):
            if pc0 == c0:
                rows.extend(r.cells() for r in point_rows)
        path = _write_csv(
            Path(out_dir) / SWEEP_FILE_TEMPLATE.format(label=format_float(c0)),
            ResultRow.header(),
            rows,
        )
        written.append(path)
    if plots:
        from . import plotting

        written.extend(plotting.plot_rate_sweep(p) for p in list(written))
    return written


def run_convergence(
    setup: ExperimentSetup,
    out_dir: str | Path,
    cost_coeffs: tuple[float, ...] = DEFAULT_COST_COEFFS,
    budget: float = 0.4,
    plots: bool = False,
) -> list[Path]:
    """Inner-loop gain estimate per sweep, one column per cost coefficient.

    The emitted series comes from the final inner solve of each budgeted
    run; sweep counts are printed for reference, not asserted anywhere.
    """
    traces: list[tuple[float, list[float]]] = []
    for c0 in cost_coeffs:
        outcome, _ = solve_labelled(setup, "effect_aware", c0, budget)
        traces.append((c0, list(outcome.value_trace)))
        print(
            f"c0={format_float(c0)}: mu*={outcome.mu_star:.6f}, "
            f"final inner solve ran {len(outcome.value_trace)} sweeps"
        )
    depth = max(len(t) for _, t in traces)
    rows = []
    for i in range(depth):
        cells = [str(i + 1)]
        for _, trace in traces:
            cells.append(format_float(trace[i]) if i < len(trace) else "")
        rows.append(cells)
    header = ["iteration"] + [f"gain_c{format_float(c0)}" for c0, _ in traces]
    path = _write_csv(Path(out_dir) / CONVERGENCE_FILE, header, rows)
    written = [path]
    if plots:
        from . import plotting

        written.append(plotting.plot_convergence(path))
    return written


def run_thresholds(
    setup: ExperimentSetup,
    out_dir: str | Path,
    cost_coeffs: tuple[float, ...] = (0.5, 1.0),
    budget: float = 0.4,
    plots: bool = False,
) -> list[Path]:
    """Decision grids for the budgeted solves, rendered Pull/Silent.

    A time-shared solution is randomized, so the grid falls back to the
    deterministic over-budget bracket policy, which is the one a threshold
    table can represent.
    """
    written: list[Path] = []
    for c0 in cost_coeffs:
        outcome, model = solve_labelled(setup, "effect_aware", c0, budget)
        policy = outcome.policy if outcome.policy.is_deterministic else outcome.policy_lo
        table = extract_threshold_table(policy, model.space)
        levels = setup.chain.levels.display()
        header = ["delta"] + [f"v{format_float(v)}" for v in levels]
        rows = []
        for delta in range(1, setup.delta_max + 1):
            cells = [str(delta)]
            for v_idx in range(len(levels)):
                pulled = table.decide_by_age(delta, v_idx)
                cells.append("Pull" if pulled else "Silent")
            rows.append(cells)
        path = _write_csv(
            Path(out_dir) / THRESHOLD_FILE_TEMPLATE.format(label=format_float(c0)),
            header,
            rows,
        )
        ths = ", ".join(
            f"v={format_float(v)}: {'never' if th is None else th}"
            for v, th in zip(levels, table.delta_thresholds)
        )
        print(f"c0={format_float(c0)} age thresholds -> {ths}")
        written.append(path)
    if plots:
        from . import plotting

        written.extend(plotting.plot_thresholds(p) for p in list(written))
    return written
