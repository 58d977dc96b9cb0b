import numpy as np
import pytest

from effectq.cmdp import (
    PULL,
    SILENT,
    StateSpace,
    build_model,
    net_reward,
    raw_reward,
    successors,
    transition_prob,
)
from effectq.errors import ConfigError
from effectq.importance import (
    ImportanceChain,
    ImportanceLevels,
    build_uniform_chain,
    build_uniform_levels,
)
from effectq.metrics import CostModel, GoeConfig
from effectq.solver import StationaryPolicy, policy_stationary_distribution, relative_value_iteration, SolverConfig, average_reward


def paper_model():
    chain = build_uniform_chain(build_uniform_levels(10))
    return build_model(chain, 10, 0.2, GoeConfig(), CostModel(0.5))


def test_state_space_size():
    chain = build_uniform_chain(build_uniform_levels(10))
    assert StateSpace(10, chain.levels).n_states == 100
    small = build_uniform_chain(build_uniform_levels(2))
    assert StateSpace(2, small.levels).n_states == 4


def test_state_space_index_roundtrip():
    space = StateSpace(10, build_uniform_levels(10))
    assert space.index(1, 0) == 0
    assert space.index(2, 0) == 10
    for idx in range(space.n_states):
        delta, v = space.state_of(idx)
        assert space.index(delta, v) == idx
        assert space.delta_of(idx) == delta
        assert space.v_index_of(idx) == v


def test_state_space_rejects_bad_indices():
    space = StateSpace(3, build_uniform_levels(2))
    with pytest.raises(ValueError):
        space.index(0, 0)
    with pytest.raises(ValueError):
        space.index(4, 0)
    with pytest.raises(ValueError):
        space.index(1, 2)
    with pytest.raises(ValueError):
        space.state_of(6)


def test_build_model_rejects_bad_error_probability():
    chain = build_uniform_chain(build_uniform_levels(3))
    with pytest.raises(ConfigError):
        build_model(chain, 5, 1.2)


def test_build_model_rejects_invalid_chain():
    levels = build_uniform_levels(2)
    chain = ImportanceChain(levels, [[0.9, 0.0], [0.5, 0.5]])
    with pytest.raises(ConfigError):
        build_model(chain, 5, 0.2)


def test_build_model_rejects_unknown_reward_mode():
    chain = build_uniform_chain(build_uniform_levels(2))
    with pytest.raises(ConfigError):
        build_model(chain, 5, 0.2, reward_mode="discounted")


def test_kernel_rows_are_stochastic():
    model = paper_model()
    for action in (SILENT, PULL):
        sums = model.kernel[action].sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) <= 1e-12


def test_pull_transition_resets_age_and_redraws_level():
    model = paper_model()
    space = model.space
    s = space.index(3, 2)
    # Success (0.8) times the uniform redraw (0.1) lands on each fresh state.
    for j in range(10):
        assert transition_prob(model, s, PULL, space.index(1, j)) == pytest.approx(0.08)
    # Failure keeps the level and ages by one slot.
    assert transition_prob(model, s, PULL, space.index(4, 2)) == pytest.approx(0.2)


def test_silent_transition_ages_in_place():
    model = paper_model()
    space = model.space
    assert transition_prob(model, space.index(5, 4), SILENT, space.index(6, 4)) == 1.0


def test_age_clamps_at_delta_max():
    model = paper_model()
    space = model.space
    s = space.index(10, 7)
    assert transition_prob(model, s, SILENT, space.index(10, 7)) == 1.0
    assert transition_prob(model, s, PULL, space.index(10, 7)) == pytest.approx(0.2)


def test_pull_reset_mass_is_success_probability():
    model = paper_model()
    space = model.space
    fresh = [space.index(1, j) for j in range(10)]
    for s in range(space.n_states):
        mass = model.kernel[PULL, s, fresh].sum()
        assert mass == pytest.approx(0.8, abs=1e-12)


def test_successor_counts():
    model = paper_model()
    space = model.space
    assert len(successors(model, space.index(3, 2), PULL)) == 11
    assert len(successors(model, space.index(3, 2), SILENT)) == 1
    clean = build_model(
        build_uniform_chain(build_uniform_levels(10)), 10, 0.0, GoeConfig(), CostModel(0.5)
    )
    assert len(successors(clean, clean.space.index(3, 2), PULL)) == 10


def test_rewards_per_slot_state():
    model = paper_model()
    space = model.space
    values = model.chain.levels.values
    target = space.index(2, 9)
    assert raw_reward(model, SILENT, target) == pytest.approx(values[9] / 2.0)
    # v = 0.5 at age 2 is worth 0.25 whether or not the slot pulled.
    levels = ImportanceLevels([0.0, 0.5, 1.0])
    small = build_model(ImportanceChain(levels, np.full((3, 3), 1 / 3)), 4, 0.2)
    s2 = small.space.index(2, 1)
    assert raw_reward(small, SILENT, s2) == pytest.approx(0.25)
    assert raw_reward(small, PULL, s2) == pytest.approx(0.25)
    assert raw_reward(small, PULL, small.space.index(2, 0)) == 0.0


def test_net_reward_prices_the_query():
    levels = ImportanceLevels([0.0, 0.5, 1.0])
    model = build_model(ImportanceChain(levels, np.full((3, 3), 1 / 3)), 4, 0.2)
    s = model.space.index(1, 1)
    target = model.space.index(2, 1)
    assert net_reward(model, s, SILENT, target, mu=2.0) == pytest.approx(0.25)
    assert net_reward(model, s, PULL, target, mu=2.0) == pytest.approx(0.25 - 1.0)
    assert net_reward(model, s, PULL, target, mu=0.0) == pytest.approx(0.25)


def test_pull_gated_mode_zeroes_silent_reward():
    chain = build_uniform_chain(build_uniform_levels(4))
    gated = build_model(chain, 5, 0.2, reward_mode="pull_gated")
    assert np.all(gated.reward0[:, SILENT] == 0.0)
    assert np.any(gated.reward0[:, PULL] > 0.0)
    s = gated.space.index(2, 3)
    assert raw_reward(gated, SILENT, s) == 0.0
    assert raw_reward(gated, PULL, s) > 0.0


def test_expected_reward_consistent_with_kernel():
    model = paper_model()
    for action in (SILENT, PULL):
        expected = model.kernel[action] @ model.state_goe
        np.testing.assert_allclose(model.reward0[:, action], expected)


def test_action_validation():
    model = paper_model()
    with pytest.raises(ValueError):
        transition_prob(model, 0, 2, 0)
    with pytest.raises(ValueError):
        successors(model, 0, -1)
    with pytest.raises(ValueError):
        transition_prob(model, 0, PULL, 100)


def test_pull_at_clamp_keeps_chain_unichain():
    # Pulling only at the oldest age still refreshes every level, so the
    # induced chain has one recurrent class.
    model = paper_model()
    space = model.space
    pull = np.zeros(space.n_states)
    for j in range(10):
        pull[space.index(10, j)] = 1.0
    rho = policy_stationary_distribution(model, StationaryPolicy(pull))
    assert rho.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(rho >= 0.0)


def test_gain_matches_stationary_average():
    # Long-run average reward is a property of the policy, not the start:
    # the value-iteration gain and the stationary-law average agree.
    model = paper_model()
    config = SolverConfig(eps_v=1e-9)
    vf, policy, _ = relative_value_iteration(model, 0.0, config)
    assert vf.gain == pytest.approx(average_reward(model, policy), abs=1e-6)
