"""Effect-aware query control for pull-based status updating.

A controller at the endpoint decides, slot by slot, whether to query a
remote source for an update. The package scores candidate updates by a
composite of freshness and usefulness, plans budgeted query policies via
an average-reward constrained solve, simulates them against time-driven
baselines, and ships a reproducible evaluation harness.
"""

from .cmdp import PULL, SILENT, CmdpModel, StateSpace, build_model
from .config import RunConfig, controller_from_config, load_config
from .errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    InfeasibleBudgetError,
    MultichainError,
    SolverError,
    StationaryDistributionError,
    ThresholdStructureError,
)
from .importance import (
    ImportanceChain,
    ImportanceLevels,
    build_uniform_chain,
    build_uniform_levels,
    sample_next,
    stationary_distribution,
    validate_chain,
)
from .metrics import CostModel, GoeConfig, comm_cost, goe, ngoe, pull_gated, validate_truncation
from .policies import (
    BinomialController,
    MarkovianController,
    PeriodicController,
    StatePolicyController,
    ThresholdController,
    ThresholdTable,
    extract_threshold_table,
    make_baseline,
    markovian_min_rate,
    special_case_policy,
    threshold_decide,
)
from .simulator import SimConfig, SimSummary, SlotTrace, replicate, run, summarize
from .solver import (
    SolveOutcome,
    SolverConfig,
    StationaryPolicy,
    average_cost,
    average_reward,
    bisect_multiplier,
    mix,
    policy_stationary_distribution,
    relative_value_iteration,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "BinomialController",
    "BracketError",
    "CmdpModel",
    "ConfigError",
    "ConvergenceError",
    "CostModel",
    "GoeConfig",
    "ImportanceChain",
    "ImportanceLevels",
    "InfeasibleBudgetError",
    "MarkovianController",
    "MultichainError",
    "PULL",
    "PeriodicController",
    "RunConfig",
    "SILENT",
    "SimConfig",
    "SimSummary",
    "SlotTrace",
    "SolveOutcome",
    "SolverConfig",
    "SolverError",
    "StatePolicyController",
    "StationaryDistributionError",
    "StationaryPolicy",
    "StateSpace",
    "ThresholdController",
    "ThresholdStructureError",
    "ThresholdTable",
    "average_cost",
    "average_reward",
    "bisect_multiplier",
    "build_model",
    "build_uniform_chain",
    "build_uniform_levels",
    "comm_cost",
    "controller_from_config",
    "extract_threshold_table",
    "goe",
    "load_config",
    "make_baseline",
    "markovian_min_rate",
    "mix",
    "ngoe",
    "policy_stationary_distribution",
    "pull_gated",
    "relative_value_iteration",
    "replicate",
    "run",
    "sample_next",
    "solve",
    "special_case_policy",
    "stationary_distribution",
    "summarize",
    "threshold_decide",
    "validate_chain",
    "validate_truncation",
]
