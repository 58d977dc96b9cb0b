import math

import numpy as np
import pytest

from effectq.importance import (
    ImportanceChain,
    ImportanceLevels,
    build_uniform_chain,
    build_uniform_levels,
)
from effectq.metrics import CostModel, GoeConfig
from effectq.policies import PeriodicController, make_baseline
from effectq.simulator import SimConfig, SlotTrace, replicate, run, run_streams, summarize


class AlwaysPull:
    name = "always"

    def reset(self, rng):
        pass

    def decide(self, slot, delta, v_index):
        return 1


class NeverPull:
    name = "never"

    def reset(self, rng):
        pass

    def decide(self, slot, delta, v_index):
        return 0


def config(n_slots=100, seed=0, p_eps=0.2, delta_max=10, levels=10, **kwargs):
    chain = build_uniform_chain(build_uniform_levels(levels))
    return SimConfig(
        chain=chain,
        delta_max=delta_max,
        p_eps=p_eps,
        cost=CostModel(0.5),
        goe_config=GoeConfig(),
        n_slots=n_slots,
        seed=seed,
        **kwargs,
    )


def test_config_validation():
    chain = build_uniform_chain(build_uniform_levels(3))
    with pytest.raises(ValueError):
        SimConfig(chain, 1, 0.2, CostModel(), GoeConfig())
    with pytest.raises(ValueError):
        SimConfig(chain, 5, 1.5, CostModel(), GoeConfig())
    with pytest.raises(ValueError):
        SimConfig(chain, 5, 0.2, CostModel(), GoeConfig(), n_slots=0)
    with pytest.raises(ValueError):
        SimConfig(chain, 5, 0.2, CostModel(), GoeConfig(), source_mode="replay")
    bad = ImportanceChain(build_uniform_levels(2), [[0.7, 0.2], [0.5, 0.5]])
    with pytest.raises(ValueError):
        SimConfig(bad, 5, 0.2, CostModel(), GoeConfig())


def test_always_pull_clean_channel_stays_fresh():
    _, trace = run(config(p_eps=0.0), AlwaysPull(), collect_trace=True)
    assert np.all(trace.delta == 1)
    assert np.all(trace.success == 1)


def test_never_pull_ages_to_clamp():
    summary, trace = run(config(n_slots=25, delta_max=10), NeverPull(), collect_trace=True)
    expected = np.minimum(np.arange(1, 26), 10)
    np.testing.assert_array_equal(trace.delta, expected)
    # The initial level is the lowest one; with nothing delivered it never
    # moves, and a zero exponent scores 1 on every slot.
    assert np.all(trace.v_index == 0)
    assert np.all(trace.ngoe == 1.0)
    assert summary.query_rate == 0.0
    assert summary.avg_cost == 0.0


def test_noisy_channel_success_frequency():
    _, trace = run(config(n_slots=100_000), AlwaysPull(), collect_trace=True)
    assert abs(trace.success.mean() - 0.8) <= 0.01


def test_aoi_recursion_holds_on_every_slot_pair():
    cfg = config(n_slots=500, delta_max=4)
    _, trace = run(cfg, make_baseline("binomial", 0.5, 0), collect_trace=True)
    for i in range(len(trace) - 1):
        if trace.success[i]:
            assert trace.delta[i + 1] == 1
        else:
            assert trace.delta[i + 1] == min(trace.delta[i] + 1, 4)
    assert np.all(trace.success <= trace.alpha)


def test_cost_accounting_identity():
    _, trace = run(config(n_slots=500), make_baseline("binomial", 0.3, 0), collect_trace=True)
    assert trace.cost.sum() == 0.5 * trace.alpha.sum()


def test_ngoe_recorded_on_decision_time_state():
    cfg = config(n_slots=50, p_eps=0.0)
    _, trace = run(cfg, PeriodicController(period=5), collect_trace=True)
    levels = cfg.chain.levels.values
    for i in range(len(trace)):
        expected = math.exp(-levels[trace.v_index[i]] * trace.delta[i] - 0.5 * trace.alpha[i])
        assert trace.ngoe[i] == pytest.approx(expected, abs=1e-15)


def test_summary_matches_trace_means():
    summary, trace = run(config(n_slots=300), make_baseline("binomial", 0.4, 1), collect_trace=True)
    assert summary.avg_ngoe == pytest.approx(trace.ngoe.mean())
    assert summary.query_rate == pytest.approx(trace.alpha.mean())
    assert summary.avg_cost == pytest.approx(trace.cost.mean())
    assert summary.avg_aoi == pytest.approx(trace.delta.mean())
    assert summary.avg_cost == pytest.approx(summary.query_rate * 0.5)


def test_summarize_two_slot_example():
    trace = SlotTrace(
        seed=0,
        slot=np.array([1, 2]),
        alpha=np.array([0, 0]),
        success=np.array([0, 0]),
        delta=np.array([1, 2]),
        v_index=np.array([0, 0]),
        delivered_v_index=np.array([-1, -1]),
        ngoe=np.array([1.0, math.exp(-1.0)]),
        cost=np.array([0.0, 0.0]),
    )
    summary = summarize(trace)
    assert summary.avg_ngoe == pytest.approx(0.6839, abs=1e-4)
    assert summary.query_rate == 0.0
    assert summary.avg_cost == 0.0


def test_summarize_rejects_empty_trace():
    empty = SlotTrace(
        seed=0,
        slot=np.array([], dtype=int),
        alpha=np.array([], dtype=int),
        success=np.array([], dtype=int),
        delta=np.array([], dtype=int),
        v_index=np.array([], dtype=int),
        delivered_v_index=np.array([], dtype=int),
        ngoe=np.array([]),
        cost=np.array([]),
    )
    with pytest.raises(ValueError):
        summarize(empty)


def test_same_seed_is_reproducible():
    cfg = config(n_slots=200, seed=11)
    first, trace_a = run(cfg, make_baseline("markovian", 0.5, 0), collect_trace=True)
    second, trace_b = run(cfg, make_baseline("markovian", 0.5, 0), collect_trace=True)
    assert first == second
    np.testing.assert_array_equal(trace_a.ngoe, trace_b.ngoe)
    np.testing.assert_array_equal(trace_a.alpha, trace_b.alpha)


def test_different_seeds_differ():
    a, _ = run(config(n_slots=200, seed=0), make_baseline("binomial", 0.5, 0))
    b, _ = run(config(n_slots=200, seed=1), make_baseline("binomial", 0.5, 0))
    assert a.avg_ngoe != b.avg_ngoe


def test_channel_draws_are_shared_across_controllers():
    # Both runs consume one channel draw per slot whether or not they pull,
    # so on slots where both controllers pull the outcomes coincide.
    cfg = config(n_slots=400)
    _, dense = run(cfg, AlwaysPull(), collect_trace=True)
    _, sparse = run(cfg, PeriodicController(period=3), collect_trace=True)
    pulled = sparse.alpha == 1
    np.testing.assert_array_equal(sparse.success[pulled], dense.success[pulled])


def test_run_streams_are_independent_and_stable():
    a = run_streams(7)
    b = run_streams(7)
    assert len(a) == 3
    for gen_a, gen_b in zip(a, b):
        assert gen_a.random() == gen_b.random()


def test_replicate_single_equals_run():
    cfg = config(n_slots=150, seed=3)
    (only,) = replicate(cfg, lambda: make_baseline("binomial", 0.5, 0), 1)
    direct, _ = run(cfg, make_baseline("binomial", 0.5, 0))
    assert only == direct


def test_replicate_uses_consecutive_seeds():
    cfg = config(n_slots=50, seed=10)
    summaries = replicate(cfg, AlwaysPull, 4)
    assert [s.seed for s in summaries] == [10, 11, 12, 13]
    with pytest.raises(ValueError):
        replicate(cfg, AlwaysPull, 0)


def test_free_running_mode_runs_and_scores_in_range():
    cfg = config(n_slots=300, source_mode="free_running")
    summary, trace = run(cfg, make_baseline("binomial", 0.6, 0), collect_trace=True)
    assert np.all(trace.delta >= 1)
    assert np.all(trace.delta <= 10)
    assert np.all(trace.ngoe > 0.0)
    assert np.all(trace.ngoe <= 1.0)
    assert 0.0 <= summary.query_rate <= 1.0


def test_delivered_level_recorded_only_on_success():
    _, trace = run(config(n_slots=300), make_baseline("binomial", 0.7, 0), collect_trace=True)
    assert np.all((trace.delivered_v_index >= 0) == (trace.success == 1))
    hits = np.flatnonzero(trace.success == 1)
    # A delivered level becomes the tracked level on the next slot.
    for i in hits:
        if i + 1 < len(trace):
            assert trace.v_index[i + 1] == trace.delivered_v_index[i]
