"""Slotted Monte-Carlo execution of the query/update loop.

Each run owns three named random substreams spawned from one seed: source
(importance redraws), channel (delivery errors) and controller (baseline or
randomized-policy coins). Source and channel draws are consumed once per
slot whether or not they are used, so two controllers run on the same seed
face identical channel errors and identical importance redraws, which makes
paired comparisons sharp.

Timing convention per slot n: the controller sees the decision-time state
(delta_n, v_index_n) and emits alpha_n; the slot's exponential score is
recorded on that decision-time state; a successful delivery resets the age
to one and redraws the level for slot n + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .importance import ImportanceChain, validate_chain
from .metrics import CostModel, GoeConfig

SOURCE_MODES = ("model_consistent", "free_running")


@dataclass(frozen=True)
class SimConfig:
    chain: ImportanceChain
    delta_max: int
    p_eps: float
    cost: CostModel
    goe_config: GoeConfig
    n_slots: int = 1000
    seed: int = 0
    source_mode: str = "model_consistent"

    def __post_init__(self) -> None:
        if self.delta_max < 2:
            raise ValueError("delta_max must be at least 2")
        if not 0.0 <= self.p_eps <= 1.0:
            raise ValueError("p_eps must lie within [0, 1]")
        if self.n_slots < 1:
            raise ValueError("n_slots must be positive")
        if self.source_mode not in SOURCE_MODES:
            raise ValueError(f"source_mode must be one of {SOURCE_MODES}")
        if validate_chain(self.chain):
            raise ValueError("importance chain is not row-stochastic")


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    alpha: int
    success: int
    delta: int
    v_index: int
    delivered_v_index: int  # -1 when nothing was delivered
    ngoe: float
    cost: float


@dataclass
class SlotTrace:
    """Columnar per-slot records for one run."""

    seed: int
    slot: np.ndarray
    alpha: np.ndarray
    success: np.ndarray
    delta: np.ndarray
    v_index: np.ndarray
    delivered_v_index: np.ndarray
    ngoe: np.ndarray
    cost: np.ndarray

    def __len__(self) -> int:
        return int(self.slot.size)

    def row(self, i: int) -> SlotRecord:
        return SlotRecord(
            slot=int(self.slot[i]),
            alpha=int(self.alpha[i]),
            success=int(self.success[i]),
            delta=int(self.delta[i]),
            v_index=int(self.v_index[i]),
            delivered_v_index=int(self.delivered_v_index[i]),
            ngoe=float(self.ngoe[i]),
            cost=float(self.cost[i]),
        )


@dataclass(frozen=True)
class SimSummary:
    avg_ngoe: float
    query_rate: float
    avg_cost: float
    avg_aoi: float
    n_slots: int
    seed: int


def run_streams(seed: int) -> tuple[np.random.Generator, ...]:
    """(source, channel, controller) generators spawned from one seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def run(config: SimConfig, controller, collect_trace: bool = False):
    """Simulate one trajectory; returns (SimSummary, SlotTrace | None)."""
    rng_source, rng_channel, rng_controller = run_streams(config.seed)
    controller.reset(rng_controller)

    levels = config.chain.levels.values
    cum = np.cumsum(config.chain.matrix, axis=1)
    k = levels.size
    c0 = config.cost.c0
    p_eps = config.p_eps
    delta_max = config.delta_max
    free_running = config.source_mode == "free_running"
    n = config.n_slots

    if collect_trace:
        t_alpha = np.zeros(n, dtype=np.int8)
        t_success = np.zeros(n, dtype=np.int8)
        t_delta = np.zeros(n, dtype=np.int32)
        t_vidx = np.zeros(n, dtype=np.int32)
        t_deliv = np.full(n, -1, dtype=np.int32)
        t_ngoe = np.zeros(n)
        t_cost = np.zeros(n)

    sum_ngoe = 0.0
    sum_alpha = 0
    sum_delta = 0
    delta = 1
    v_idx = 0
    src_idx = 0

    for slot in range(1, n + 1):
        u_channel = rng_channel.random()
        u_source = rng_source.random()
        alpha = controller.decide(slot, delta, v_idx)
        success = alpha == 1 and u_channel >= p_eps
        score = math.exp(-levels[v_idx] * delta - c0 * alpha)

        sum_ngoe += score
        sum_alpha += alpha
        sum_delta += delta
        if collect_trace:
            i = slot - 1
            t_alpha[i] = alpha
            t_success[i] = success
            t_delta[i] = delta
            t_vidx[i] = v_idx
            t_ngoe[i] = score
            t_cost[i] = alpha * c0

        if free_running:
            next_src = min(int(np.searchsorted(cum[src_idx], u_source, side="right")), k - 1)
        if success:
            if free_running:
                delivered = src_idx
            else:
                delivered = min(
                    int(np.searchsorted(cum[v_idx], u_source, side="right")), k - 1
                )
            if collect_trace:
                t_deliv[slot - 1] = delivered
            v_idx = delivered
            delta = 1
        else:
            delta = min(delta + 1, delta_max)
        if free_running:
            src_idx = next_src

    summary = SimSummary(
        avg_ngoe=sum_ngoe / n,
        query_rate=sum_alpha / n,
        avg_cost=sum_alpha * c0 / n,
        avg_aoi=sum_delta / n,
        n_slots=n,
        seed=config.seed,
    )
    trace = None
    if collect_trace:
        trace = SlotTrace(
            seed=config.seed,
            slot=np.arange(1, n + 1),
            alpha=t_alpha,
            success=t_success,
            delta=t_delta,
            v_index=t_vidx,
            delivered_v_index=t_deliv,
            ngoe=t_ngoe,
            cost=t_cost,
        )
    return summary, trace


def summarize(trace: SlotTrace) -> SimSummary:
    """Arithmetic means over all slots of a collected trace."""
    n = len(trace)
    if n == 0:
        raise ValueError("cannot summarize an empty trace")
    return SimSummary(
        avg_ngoe=float(trace.ngoe.mean()),
        query_rate=float(trace.alpha.mean()),
        avg_cost=float(trace.cost.mean()),
        avg_aoi=float(trace.delta.mean()),
        n_slots=n,
        seed=trace.seed,
    )


def replicate(config: SimConfig, controller_factory, count: int) -> list[SimSummary]:
    """Independent replications on seeds seed, seed+1, ..., seed+count-1."""
    if count < 1:
        raise ValueError("replication count must be positive")
    out = []
    for i in range(count):
        cfg = SimConfig(
            chain=config.chain,
            delta_max=config.delta_max,
            p_eps=config.p_eps,
            cost=config.cost,
            goe_config=config.goe_config,
            n_slots=config.n_slots,
            seed=config.seed + i,
            source_mode=config.source_mode,
        )
        summary, _ = run(cfg, controller_factory())
        out.append(summary)
    return out
