"""Run configuration: one JSON file drives solver, simulator, and experiments.

Validation walks the whole document before any computation starts and
reports every problem at once, each message prefixed with its field path
(for example ``model.p_eps: must lie within [0, 1]``).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .cmdp import REWARD_MODES, StateSpace
from .errors import ConfigError
from .importance import (
    ImportanceChain,
    ImportanceLevels,
    build_uniform_chain,
    build_uniform_levels,
    validate_chain,
)
from .metrics import (
    COMPOSE_RULES,
    COST_FAMILIES,
    PENALTY_FAMILIES,
    UTILITY_FAMILIES,
    CostModel,
    GoeConfig,
)
from .policies import BASELINE_KINDS, make_baseline, StatePolicyController
from .simulator import SOURCE_MODES
from .solver import ETA_MODES, SolverConfig, StationaryPolicy

EXPERIMENT_NAMES = ("fig2", "fig3", "fig4", "fig5", "table1")

_MODEL_KEYS = {"chain", "delta_max", "p_eps", "goe", "c0", "c_max", "reward_mode"}
_SOLVER_KEYS = {
    "eps_v",
    "eps_mu",
    "eta_mode",
    "eta",
    "mu_lo",
    "mu_hi",
    "max_inner_iters",
    "max_outer_steps",
}
_SIMULATION_KEYS = {"n_slots", "seed", "source_mode", "trace"}
_EXPERIMENT_KEYS = {
    "which",
    "rates",
    "cost_coeffs",
    "replications",
    "n_slots",
    "seed",
    "rate",
    "period",
    "snapshot_slots",
    "budget",
    "threshold_costs",
}
_CONTROLLER_KEYS = {"kind", "rate", "path", "seed"}
_TOP_KEYS = {"model", "solver", "simulation", "controller", "experiment", "output"}


@dataclass(frozen=True)
class RunConfig:
    chain: ImportanceChain
    delta_max: int
    p_eps: float
    goe_config: GoeConfig
    cost: CostModel
    c_max: float
    reward_mode: str
    solver: SolverConfig
    n_slots: int
    seed: int
    source_mode: str
    controller: dict[str, Any] = field(default_factory=dict)
    experiment: dict[str, Any] = field(default_factory=dict)
    out_dir: str = "results"
    config_hash: str = ""
    raw: dict[str, Any] = field(default_factory=dict)


def config_hash(document: dict[str, Any]) -> str:
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _get(block: dict, key: str, default: Any) -> Any:
    return block.get(key, default)


def _check_keys(block: dict, allowed: set[str], path: str, errors: list[str]) -> None:
    for key in block:
        if key not in allowed:
            errors.append(f"{path}.{key}: unrecognized field")


def _build_chain(spec: Any, errors: list[str]) -> ImportanceChain | None:
    path = "model.chain"
    if spec is None:
        return build_uniform_chain(build_uniform_levels(10))
    if not isinstance(spec, dict):
        errors.append(f"{path}: expected an object")
        return None
    if "uniform" in spec:
        count = spec["uniform"].get("count", 10) if isinstance(spec["uniform"], dict) else None
        if not isinstance(count, int) or count < 2:
            errors.append(f"{path}.uniform.count: expected an integer >= 2")
            return None
        return build_uniform_chain(build_uniform_levels(count))
    if "levels" not in spec or "matrix" not in spec:
        errors.append(f"{path}: expected either a 'uniform' block or 'levels' plus 'matrix'")
        return None
    try:
        levels = ImportanceLevels(tuple(float(v) for v in spec["levels"]))
    except (TypeError, ValueError) as exc:
        errors.append(f"{path}.levels: {exc}")
        return None
    try:
        matrix = np.asarray(spec["matrix"], dtype=float)
        chain = ImportanceChain(levels, matrix)
    except (TypeError, ValueError) as exc:
        errors.append(f"{path}.matrix: {exc}")
        return None
    for violation in validate_chain(chain):
        errors.append(f"{path}.matrix: row {violation.row}: {violation.detail}")
    return chain


def load_config(path: str | Path) -> RunConfig:
    """Parse and fully validate a run configuration file."""
    try:
        with open(path) as fh:
            document = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON: line {exc.lineno}: {exc.msg}"]) from exc
    if not isinstance(document, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return parse_config(document)


def parse_config(document: dict[str, Any]) -> RunConfig:
    errors: list[str] = []
    _check_keys(document, _TOP_KEYS, "config", errors)

    model = document.get("model", {})
    solver_block = document.get("solver", {})
    simulation = document.get("simulation", {})
    controller = document.get("controller", {})
    experiment = document.get("experiment", {})
    output = document.get("output", {})
    for name, block in (
        ("model", model),
        ("solver", solver_block),
        ("simulation", simulation),
        ("controller", controller),
        ("experiment", experiment),
        ("output", output),
    ):
        if not isinstance(block, dict):
            errors.append(f"{name}: expected an object")
    if errors:
        raise ConfigError(errors)

    _check_keys(model, _MODEL_KEYS, "model", errors)
    _check_keys(solver_block, _SOLVER_KEYS, "solver", errors)
    _check_keys(simulation, _SIMULATION_KEYS, "simulation", errors)
    _check_keys(controller, _CONTROLLER_KEYS, "controller", errors)
    _check_keys(experiment, _EXPERIMENT_KEYS, "experiment", errors)
    _check_keys(output, {"dir"}, "output", errors)

    chain = _build_chain(model.get("chain"), errors)

    delta_max = _get(model, "delta_max", 10)
    if not isinstance(delta_max, int) or delta_max < 2:
        errors.append("model.delta_max: expected an integer >= 2")
    p_eps = _get(model, "p_eps", 0.2)
    if not isinstance(p_eps, (int, float)) or not 0.0 <= float(p_eps) <= 1.0:
        errors.append("model.p_eps: must lie within [0, 1]")
    reward_mode = _get(model, "reward_mode", "per_slot_state")
    if reward_mode not in REWARD_MODES:
        errors.append(f"model.reward_mode: expected one of {REWARD_MODES}")

    goe_block = _get(model, "goe", {})
    goe_config = None
    if not isinstance(goe_block, dict):
        errors.append("model.goe: expected an object")
    else:
        _check_keys(
            goe_block, {"penalty", "utility", "compose", "cost", "decay_rate"}, "model.goe", errors
        )
        try:
            goe_config = GoeConfig(
                penalty=_get(goe_block, "penalty", "reciprocal"),
                utility=_get(goe_block, "utility", "linear"),
                compose=_get(goe_block, "compose", "product"),
                cost=_get(goe_block, "cost", "linear"),
                decay_rate=float(_get(goe_block, "decay_rate", 1.0)),
            )
        except (TypeError, ValueError) as exc:
            errors.append(f"model.goe: {exc}")

    cost = None
    c0 = _get(model, "c0", 0.5)
    try:
        cost = CostModel(float(c0))
    except (TypeError, ValueError) as exc:
        errors.append(f"model.c0: {exc}")
    c_max = _get(model, "c_max", 0.4)
    if not isinstance(c_max, (int, float)) or float(c_max) < 0.0:
        errors.append("model.c_max: must be a nonnegative number")

    solver_config = None
    try:
        solver_config = SolverConfig(
            eps_v=float(_get(solver_block, "eps_v", 1e-3)),
            eps_mu=float(_get(solver_block, "eps_mu", 1e-3)),
            mu_lo=float(_get(solver_block, "mu_lo", 0.0)),
            mu_hi=(
                None
                if _get(solver_block, "mu_hi", None) is None
                else float(solver_block["mu_hi"])
            ),
            eta_mode=_get(solver_block, "eta_mode", "cost_matched"),
            eta=float(_get(solver_block, "eta", 0.5)),
            max_inner_iters=int(_get(solver_block, "max_inner_iters", 100_000)),
            max_outer_steps=int(_get(solver_block, "max_outer_steps", 60)),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"solver: {exc}")

    n_slots = _get(simulation, "n_slots", 1000)
    if not isinstance(n_slots, int) or n_slots < 1:
        errors.append("simulation.n_slots: expected a positive integer")
    seed = _get(simulation, "seed", 0)
    if not isinstance(seed, int) or seed < 0:
        errors.append("simulation.seed: expected a nonnegative integer")
    source_mode = _get(simulation, "source_mode", "model_consistent")
    if source_mode not in SOURCE_MODES:
        errors.append(f"simulation.source_mode: expected one of {SOURCE_MODES}")

    if controller:
        kind = controller.get("kind")
        if kind in BASELINE_KINDS:
            rate = controller.get("rate")
            if not isinstance(rate, (int, float)) or not 0.0 < float(rate) <= 1.0:
                errors.append("controller.rate: must lie within (0, 1]")
            else:
                try:
                    make_baseline(kind, float(rate))
                except ValueError as exc:
                    errors.append(f"controller.rate: {exc}")
        elif kind == "policy_file":
            file_path = controller.get("path")
            if not isinstance(file_path, str) or not file_path:
                errors.append("controller.path: expected a file path")
            elif not os.path.exists(file_path):
                errors.append(f"controller.path: no such file: {file_path}")
        else:
            errors.append(
                f"controller.kind: expected one of {BASELINE_KINDS + ('policy_file',)}"
            )

    which = experiment.get("which")
    if which is not None and which not in EXPERIMENT_NAMES:
        errors.append(f"experiment.which: expected one of {EXPERIMENT_NAMES}")
    for key in ("rates", "cost_coeffs", "threshold_costs"):
        grid = experiment.get(key)
        if grid is not None and (
            not isinstance(grid, list)
            or not grid
            or any(not isinstance(x, (int, float)) for x in grid)
        ):
            errors.append(f"experiment.{key}: expected a nonempty list of numbers")
    for key in ("replications", "n_slots", "seed", "period", "snapshot_slots"):
        val = experiment.get(key)
        if val is not None and (not isinstance(val, int) or val < (0 if key == "seed" else 1)):
            errors.append(f"experiment.{key}: expected a positive integer")

    out_dir = _get(output, "dir", "results")
    if not isinstance(out_dir, str) or not out_dir:
        errors.append("output.dir: expected a directory path")

    if errors:
        raise ConfigError(errors)

    return RunConfig(
        chain=chain,
        delta_max=delta_max,
        p_eps=float(p_eps),
        goe_config=goe_config,
        cost=cost,
        c_max=float(c_max),
        reward_mode=reward_mode,
        solver=solver_config,
        n_slots=n_slots,
        seed=seed,
        source_mode=source_mode,
        controller=dict(controller),
        experiment=dict(experiment),
        out_dir=out_dir,
        config_hash=config_hash(document),
        raw=document,
    )


def controller_from_config(run: RunConfig):
    """Instantiate the controller block; assumes the config already validated."""
    kind = run.controller.get("kind")
    if kind in BASELINE_KINDS:
        return make_baseline(kind, float(run.controller["rate"]), run.seed)
    if kind == "policy_file":
        return _controller_from_policy_file(run)
    raise ConfigError(["controller: missing or unknown 'kind'"])


def _controller_from_policy_file(run: RunConfig):
    file_path = run.controller["path"]
    try:
        with open(file_path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"controller.path: cannot read {file_path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"controller.path: {file_path} is not valid JSON: {exc.msg}"]) from exc
    for key in ("pull_prob", "delta_max", "levels"):
        if key not in payload:
            raise ConfigError([f"controller.path: {file_path} lacks the '{key}' field"])
    if payload["delta_max"] != run.delta_max:
        raise ConfigError(
            [
                "controller.path: policy was solved for delta_max="
                f"{payload['delta_max']} but the model uses {run.delta_max}"
            ]
        )
    levels = np.asarray(payload["levels"], dtype=float)
    if levels.shape != run.chain.levels.values.shape or not np.array_equal(
        levels, run.chain.levels.values
    ):
        raise ConfigError(["controller.path: policy level grid differs from the model's"])
    pull_prob = np.asarray(payload["pull_prob"], dtype=float)
    space = StateSpace(run.delta_max, run.chain.levels)
    if pull_prob.shape != (space.n_states,):
        raise ConfigError(
            [
                f"controller.path: pull_prob has {pull_prob.size} entries; "
                f"the state space needs {space.n_states}"
            ]
        )
    return StatePolicyController(StationaryPolicy(pull_prob), space)
