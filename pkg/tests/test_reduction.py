import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyrmdp.benchgen import gen_random_tiny
from polyrmdp.game_engine import PolicyPair
from polyrmdp.model import DiscountMode, Objective, PurePolicy, Rmdp
from polyrmdp.oracle import game_pair_limavg, policy_pair_limavg
from polyrmdp.reduction import (
    counted_size,
    lift_agent_policy,
    lift_env_policy,
    lower_agent_policy,
    lower_env_policy,
    reduce,
    reduction_size,
)

small_models = st.builds(
    gen_random_tiny,
    st.integers(1, 3), st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**32 - 1),
)


def test_m1_shape(m1):
    g, _ = reduce(m1, Objective.LIMAVG)
    assert (g.n_max, g.n_min, g.n_max_actions, g.n_min_actions) == (1, 1, 1, 1)
    assert g.rewards[g.starts[0]] == 10.0
    assert g.discount_mode is None


def test_m1_discounted_keeps_reward(m1):
    g, _ = reduce(m1, Objective.DISCOUNTED)
    assert (g.n_max, g.n_min) == (1, 1)
    assert g.rewards[g.starts[0]] == 5.0
    assert g.discount_mode is DiscountMode.ALTERNATE_STEP


def test_m2_shape(m2):
    g, _ = reduce(m2)
    assert (g.n_max, g.n_min, g.n_min_actions) == (2, 2, 4)
    assert g.rewards[g.starts[0]] == 2.0 and g.rewards[g.starts[1]] == 0.0
    assert np.all(g.rewards[g.starts[g.n_max]:] == 0.0)


def test_size_formula_examples(m1, m2):
    assert reduction_size(m2)["n_states_G"] == 4 and reduction_size(m2)["n_actions_G"] == 5
    assert reduction_size(m1)["n_states_G"] == 2 and reduction_size(m1)["n_actions_G"] == 2
    polys = [[np.eye(3)] * 2 for _ in range(3)]
    m = Rmdp(3, 2, polys, np.zeros((3, 2)))
    size = reduction_size(m)
    assert size["n_states_G"] == 9 and size["n_actions_G"] == 20


@settings(max_examples=100, deadline=None)
@given(small_models, st.sampled_from(list(Objective)))
def test_counted_size_matches_formula(m, objective):
    g, _ = reduce(m, objective)
    assert counted_size(g) == reduction_size(m)


@settings(max_examples=100, deadline=None)
@given(small_models)
def test_alternation(m):
    g, _ = reduce(m)
    max_rows = slice(0, int(g.starts[g.n_max]))
    min_rows = slice(int(g.starts[g.n_max]), g.n_rows)
    assert not g.delta[max_rows, : g.n_max].any()
    assert not g.delta[min_rows, g.n_max:].any()


def test_lift_agent_on_m1(m1):
    _, rmap = reduce(m1)
    assert lift_agent_policy(PurePolicy((0,)), rmap) == PurePolicy((0,))


def test_lift_env_vertex_zero_on_m2(m2):
    g, rmap = reduce(m2)
    pi = lift_env_policy(np.zeros((2, 1), dtype=int), rmap)
    assert pi == PurePolicy((0, 0))
    for j in range(g.n_min):
        row = g.starts[g.n_max + j] + pi[j]
        s, a = rmap.pair_of_min(j)
        assert np.array_equal(g.delta[row, : g.n_max], m2.polytopes[s][a][0])


def test_lower_env_on_m1(m1):
    _, rmap = reduce(m1)
    assert lower_env_policy(PurePolicy((0,)), rmap).tolist() == [[0]]


@settings(max_examples=60, deadline=None)
@given(small_models, st.integers(0, 10_000))
def test_lift_lower_bijection(m, seed):
    _, rmap = reduce(m)
    rng = np.random.default_rng(seed)
    sigma = PurePolicy(rng.integers(m.n_actions, size=m.n_states))
    sel = np.array([[rng.integers(c) for c in row] for row in m.vertex_counts])
    assert lower_agent_policy(lift_agent_policy(sigma, rmap), rmap) == sigma
    assert np.array_equal(lower_env_policy(lift_env_policy(sel, rmap), rmap), sel)
    for s, a in itertools.product(range(m.n_states), range(m.n_actions)):
        for v in range(m.vertex_counts[s, a]):
            assert rmap.vertex_of_action(rmap.vertex_action_of(s, a, v)) == (s, a, v)


def test_lift_rejects_bad_selection(m2):
    _, rmap = reduce(m2)
    with pytest.raises(IndexError):
        lift_env_policy(np.array([[2], [0]]), rmap)


@settings(max_examples=40, deadline=None)
@given(small_models)
def test_pair_values_preserved(m):
    g, rmap = reduce(m)
    for sigma in itertools.product(range(m.n_actions), repeat=m.n_states):
        sigma = PurePolicy(sigma)
        for sel in itertools.product(*(range(c) for c in m.vertex_counts.ravel())):
            sel = np.array(sel).reshape(m.n_states, m.n_actions)
            in_m = policy_pair_limavg(m, sigma, sel)
            pair = PolicyPair(lift_agent_policy(sigma, rmap), lift_env_policy(sel, rmap))
            in_g = game_pair_limavg(g, pair)
            np.testing.assert_allclose(in_g[: g.n_max], in_m, atol=1e-9)
