import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyrmdp.benchgen import gen_random_tiny
from polyrmdp.game_engine import (
    PolicyPair,
    discount_ladder,
    ppe,
    rppi,
    strategy_iteration_discounted,
    verify_agent_policy,
)
from polyrmdp.mdp_engine import (
    Mdp,
    fix_max_policy,
    fix_min_policy,
    solve_discounted_mdp,
    solve_lra_mdp,
)
from polyrmdp.model import DiscountMode, Objective, PurePolicy, Rmdp
from polyrmdp.reduction import lift_agent_policy, reduce


def test_ladder_is_exact():
    ladder = list(discount_ladder())
    assert ladder[:4] == [0.5, 0.75, 0.875, 0.9375]
    for k, gamma in enumerate(ladder):
        assert gamma == 1.0 - 2.0 ** -(k + 1)


def test_every_step_on_m1(m1):
    g, _ = reduce(m1)
    sol = strategy_iteration_discounted(g, 0.5)
    assert sol.values[0] == pytest.approx(40.0 / 3.0)


def test_alternate_step_on_m1(m1):
    g, _ = reduce(m1, Objective.DISCOUNTED)
    sol = strategy_iteration_discounted(g, 0.5, DiscountMode.ALTERNATE_STEP)
    assert sol.values[0] == pytest.approx(10.0)


def test_alternate_step_needs_alternation():
    from polyrmdp.model import Tbsg
    g = Tbsg.from_actions(1, 1, [[(0, 1.0, [1.0, 0.0])], [(0, 0.0, [1.0, 0.0])]])
    with pytest.raises(ValueError):
        strategy_iteration_discounted(g, 0.5, DiscountMode.ALTERNATE_STEP)


def test_m2_min_choice(m2):
    g, _ = reduce(m2)
    sol = strategy_iteration_discounted(g, 0.99)
    assert sol.pair.min_policy == PurePolicy((1, 0))


def test_ppe_examples(m1, m2):
    g, _ = reduce(m2)
    res = ppe(g, PolicyPair(PurePolicy((0, 0)), PurePolicy((1, 0))))
    assert res.is_optimal and res.values[0] == pytest.approx(0.375, abs=1e-9)
    res = ppe(g, PolicyPair(PurePolicy((0, 0)), PurePolicy((0, 0))))
    assert not res.is_optimal
    assert res.values[0] == pytest.approx(0.75, abs=1e-9) and res.min_values[0] == pytest.approx(0.375, abs=1e-9)
    g1, _ = reduce(m1)
    res = ppe(g1, PolicyPair(PurePolicy((0,)), PurePolicy((0,))))
    assert res.is_optimal and res.values[0] == pytest.approx(5.0)


def test_rppi_examples(m1, m2, chooser):
    r = rppi(m1)
    assert r.value_at_initial == pytest.approx(5.0) and r.agent_policy == PurePolicy((0,))
    assert r.outer_iterations == 1
    assert rppi(m2).value_at_initial == pytest.approx(0.375, abs=1e-9)
    r = rppi(chooser)
    assert r.value_at_initial == pytest.approx(3.0) and r.agent_policy[0] == 0


def test_rppi_gamma_history(m2):
    r = rppi(m2)
    assert r.gamma_history == list(discount_ladder())[: r.outer_iterations]
    assert r.final_gamma == r.gamma_history[-1]


def test_verify_examples(m1, m2):
    res = verify_agent_policy(m2, PurePolicy((0, 0)), 0.3)
    assert res.holds and res.inf_value == pytest.approx(0.375, abs=1e-9)
    assert not verify_agent_policy(m2, PurePolicy((0, 0)), 0.4).holds
    res = verify_agent_policy(m1, PurePolicy((0,)), 5.0)
    assert res.holds and res.inf_value == pytest.approx(5.0)


tiny = st.builds(gen_random_tiny, st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
                 st.integers(0, 2**32 - 1))


def _one_switch_gains(g, pair, gamma, V, player):
    """Best discounted value change from one single-state deviation."""
    best = 0.0
    states = range(g.n_max) if player == "max" else range(g.n_max, g.n_states)
    for s in states:
        for c in range(g.n_actions_at(s)):
            if player == "max":
                pol = pair.max_policy.as_array()
                if pol[s] == c:
                    continue
                pol[s] = c
                rows = g.policy_rows(PurePolicy(pol), pair.min_policy)
            else:
                pol = pair.min_policy.as_array()
                if pol[s - g.n_max] == c:
                    continue
                pol[s - g.n_max] = c
                rows = g.policy_rows(pair.max_policy, PurePolicy(pol))
            W = np.linalg.solve(np.eye(g.n_states) - gamma * g.delta[rows], g.rewards[rows])
            gain = (W - V).max() if player == "max" else (V - W).max()
            best = max(best, float(gain))
    return best


@settings(max_examples=40, deadline=None)
@given(st.builds(gen_random_tiny, st.integers(1, 2), st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**32 - 1)),
       st.sampled_from([0.5, 0.9, 0.99]))
def test_equilibrium_certificate(m, gamma):
    g, _ = reduce(m)
    tol = 1e-10
    sol = strategy_iteration_discounted(g, gamma, tol=tol)
    assert _one_switch_gains(g, sol.pair, gamma, sol.values, "max") <= 10 * tol * max(1, abs(sol.values).max())
    assert _one_switch_gains(g, sol.pair, gamma, sol.values, "min") <= 10 * tol * max(1, abs(sol.values).max())


@settings(max_examples=50, deadline=None)
@given(tiny)
def test_ppe_soundness(m):
    g, rmap = reduce(m)
    r = rppi(m)
    # the report's env policy is the selection table flattened pair-major, i.e. the Min policy
    pair = PolicyPair(lift_agent_policy(r.agent_policy, rmap), r.env_policy)
    res = ppe(g, pair)
    assert res.is_optimal
    # one more improvement round for either player gains nothing
    for mdp, fixed, sign in ((fix_min_policy(g, pair.min_policy), res.values, 1.0),
                             (fix_max_policy(g, pair.max_policy), res.min_values, -1.0)):
        best = solve_lra_mdp(mdp).gain_bias.gain
        assert sign * (best - fixed).max() <= 10 * 1e-5


def singleton_rmdp(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    polys = [[(lambda p: p / p.sum())(rng.random(n) * (rng.random(n) < 0.6) + 1e-3 * (rng.random(n) < 0.2) +
                                       np.eye(n)[rng.integers(n)])[None, :] for _ in range(k)] for _ in range(n)]
    return Rmdp(n, k, polys, rng.normal(size=(n, k)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.5, 0.9, 0.99]))
def test_alternate_step_matches_direct_mdp(seed, gamma):
    m = singleton_rmdp(seed)
    g, _ = reduce(m, Objective.DISCOUNTED)
    sol = strategy_iteration_discounted(g, gamma, DiscountMode.ALTERNATE_STEP, tol=1e-12)
    direct = Mdp.from_actions([[(m.rewards[s, a], m.polytopes[s][a][0]) for a in range(m.n_actions)]
                               for s in range(m.n_states)])
    np.testing.assert_allclose(sol.values[: g.n_max], solve_discounted_mdp(direct, gamma).values, atol=1e-9)
