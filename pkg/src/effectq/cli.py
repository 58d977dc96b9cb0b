"""Command-line interface: solve, simulate, experiment, thresholds.

Exit codes: 0 success, 2 configuration or validation failure, 3 numerical
failure (nonconvergence, infeasible budget), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .cmdp import build_model
from .config import EXPERIMENT_NAMES, RunConfig, controller_from_config, load_config
from .errors import ConfigError, SolverError
from .experiments import (
    DEFAULT_COST_COEFFS,
    DEFAULT_RATES,
    ExperimentSetup,
    SweepSpec,
    format_float,
    run_cdf,
    run_convergence,
    run_rate_sweep,
    run_snapshot,
    run_thresholds,
)
from .simulator import SimConfig, run as run_simulation
from .solver import solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="effectq",
        description="Effect-aware query control: budgeted solves, simulation, evaluations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="path to a JSON run configuration")
        p.add_argument("--out-dir", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument(
            "--validate-only",
            action="store_true",
            help="validate the configuration and exit without computing",
        )

    p_solve = sub.add_parser("solve", help="solve the budgeted control problem")
    common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_sim = sub.add_parser("simulate", help="run the slotted simulator once")
    common(p_sim)
    p_sim.add_argument("--trace", action="store_true", help="also write the per-slot table")
    p_sim.set_defaults(func=cmd_simulate)

    p_exp = sub.add_parser("experiment", help="run one scripted evaluation")
    common(p_exp)
    p_exp.add_argument(
        "which",
        nargs="?",
        choices=EXPERIMENT_NAMES,
        help="which evaluation to run (defaults to experiment.which in the config)",
    )
    p_exp.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="parallel workers for grid points (1 = serial)")
    p_exp.add_argument("--plots", action="store_true", help="render SVG plots next to CSVs")
    p_exp.set_defaults(func=cmd_experiment)

    p_thr = sub.add_parser("thresholds", help="solve and render threshold decision grids")
    common(p_thr)
    p_thr.add_argument("--plots", action="store_true", help="render SVG plots next to CSVs")
    p_thr.set_defaults(func=cmd_thresholds)

    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    run = load_config(args.config)
    if args.out_dir:
        run = replace(run, out_dir=args.out_dir)
    if args.seed is not None:
        run = replace(run, seed=args.seed)
        run.experiment["seed"] = args.seed
    return run


def _setup(run: RunConfig) -> ExperimentSetup:
    return ExperimentSetup(
        chain=run.chain,
        delta_max=run.delta_max,
        p_eps=run.p_eps,
        goe_config=run.goe_config,
        reward_mode=run.reward_mode,
        source_mode=run.source_mode,
        solver=run.solver,
        config_hash=run.config_hash,
    )


def _validated_exit(run: RunConfig) -> int:
    print(f"configuration ok (hash {run.config_hash})")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    run = _load(args)
    if args.validate_only:
        return _validated_exit(run)
    model = build_model(
        run.chain, run.delta_max, run.p_eps, run.goe_config, run.cost, run.reward_mode
    )
    outcome = solve(model, run.c_max, run.solver)
    n_levels = len(run.chain.levels.values)
    table = [
        [float(p) for p in outcome.policy.pull_prob[row * n_levels : (row + 1) * n_levels]]
        for row in range(run.delta_max)
    ]
    payload = {
        "mu_star": outcome.mu_star,
        "eta": outcome.eta_used,
        "achieved_cost": outcome.achieved_cost,
        "achieved_goe": outcome.achieved_goe,
        "mu_lo": outcome.mu_lo,
        "mu_hi": outcome.mu_hi,
        "outer_steps": outcome.outer_steps,
        "inner_iteration_counts": outcome.inner_iteration_counts,
        "gain_trace": [float(g) for g in outcome.value_trace],
        "warning": outcome.warning,
        "delta_max": run.delta_max,
        "levels": list(run.chain.levels.values),
        "pull_prob": [float(p) for p in outcome.policy.pull_prob],
        "action_table": table,
        "policy_lo": [float(p) for p in outcome.policy_lo.pull_prob],
        "policy_hi": (
            None if outcome.policy_hi is None
            else [float(p) for p in outcome.policy_hi.pull_prob]
        ),
        "seed": run.seed,
        "config_hash": run.config_hash,
    }
    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result_path = out_dir / "solve_result.json"
    with open(result_path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(
        f"mu*={outcome.mu_star:.6f} eta={outcome.eta_used} "
        f"cost={outcome.achieved_cost:.6f} goe={outcome.achieved_goe:.6f}"
    )
    if outcome.warning:
        print(f"warning: {outcome.warning}")
    print(f"wrote {result_path}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    run = _load(args)
    if args.validate_only:
        return _validated_exit(run)
    controller = controller_from_config(run)
    sim = SimConfig(
        chain=run.chain,
        delta_max=run.delta_max,
        p_eps=run.p_eps,
        cost=run.cost,
        goe_config=run.goe_config,
        n_slots=run.n_slots,
        seed=run.seed,
        source_mode=run.source_mode,
    )
    want_trace = args.trace or bool(run.controller.get("trace"))
    summary, trace = run_simulation(sim, controller, collect_trace=want_trace)
    print(
        f"policy={run.controller.get('kind')} n_slots={summary.n_slots} seed={summary.seed} "
        f"avg_ngoe={format_float(summary.avg_ngoe)} "
        f"query_rate={format_float(summary.query_rate)} "
        f"avg_cost={format_float(summary.avg_cost)} "
        f"avg_aoi={format_float(summary.avg_aoi)}"
    )
    if want_trace:
        out_dir = Path(run.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        trace_path = out_dir / "simulate_trace.csv"
        import csv

        levels = run.chain.levels.values
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["slot", "alpha", "success", "delta", "v_m", "ngoe", "cost"])
            for i in range(summary.n_slots):
                rec = trace.row(i)
                writer.writerow(
                    [
                        rec.slot,
                        rec.alpha,
                        rec.success,
                        rec.delta,
                        format_float(levels[rec.v_index]),
                        format_float(rec.ngoe),
                        format_float(rec.cost),
                    ]
                )
        print(f"wrote {trace_path}")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    run = _load(args)
    which = args.which or run.experiment.get("which")
    if which is None:
        raise ConfigError(
            ["experiment.which: not in the config and no name given on the command line"]
        )
    if args.validate_only:
        return _validated_exit(run)
    setup = _setup(run)
    exp = run.experiment
    seed = exp.get("seed", run.seed)
    out_dir = run.out_dir
    if which == "fig2":
        written = run_snapshot(
            setup,
            out_dir,
            c0=run.cost.c0,
            budget=run.c_max,
            period=exp.get("period", 7),
            n_slots=exp.get("snapshot_slots", 50),
            seed=seed,
            plots=args.plots,
        )
    elif which == "fig3":
        written = run_cdf(
            setup,
            out_dir,
            c0=run.cost.c0,
            rate=exp.get("rate", 0.8),
            replications=exp.get("replications", 30),
            n_slots=exp.get("n_slots", run.n_slots),
            seed=seed,
            plots=args.plots,
        )
    elif which == "fig4":
        spec = SweepSpec(
            rates=tuple(exp.get("rates", DEFAULT_RATES)),
            cost_coeffs=tuple(exp.get("cost_coeffs", DEFAULT_COST_COEFFS)),
            replications=exp.get("replications", 30),
            n_slots=exp.get("n_slots", run.n_slots),
            seed=seed,
        )
        written = run_rate_sweep(setup, out_dir, spec, jobs=args.jobs, plots=args.plots)
    elif which == "fig5":
        written = run_convergence(
            setup,
            out_dir,
            cost_coeffs=tuple(exp.get("cost_coeffs", (0.1, 0.5, 1.0))),
            budget=run.c_max,
            plots=args.plots,
        )
    else:
        written = run_thresholds(
            setup,
            out_dir,
            cost_coeffs=tuple(exp.get("threshold_costs", (0.5, 1.0))),
            budget=run.c_max,
            plots=args.plots,
        )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_thresholds(args: argparse.Namespace) -> int:
    run = _load(args)
    if args.validate_only:
        return _validated_exit(run)
    setup = _setup(run)
    written = run_thresholds(
        setup,
        run.out_dir,
        cost_coeffs=tuple(run.experiment.get("threshold_costs", (0.5, 1.0))),
        budget=run.c_max,
        plots=args.plots,
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
