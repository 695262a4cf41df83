"""Strategy iteration for discounted turn-based stochastic games, policy
profile evaluation (PPE) and the RPPI outer loop over a discount ladder."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import IterationLimitError, NotConvergedError
from .mdp_engine import (
    MAX_IMPROVEMENT_ROUNDS,
    discount_vector,
    fix_max_policy,
    fix_min_policy,
    solve_discounted_mdp,
    solve_lra_mdp,
)
from .model import Algorithm, DiscountMode, Objective, PurePolicy, Rmdp, SolveReport, Tbsg, make_report
from .reduction import lift_agent_policy, lower_agent_policy, lower_env_policy, reduce

PPE_TOL = 1e-5
MAX_OUTER = 64


@dataclass(frozen=True)
class PolicyPair:
    max_policy: PurePolicy
    min_policy: PurePolicy


@dataclass(frozen=True, eq=False)
class PpeResult:
    is_optimal: bool
    values: np.ndarray  # Max-response gains; meaningful when is_optimal
    min_values: np.ndarray
    gap: float
    iterations: int = 0


class GameSolution(NamedTuple):
    pair: PolicyPair
    values: np.ndarray
    rounds: int
    inner_iterations: int


def discount_ladder():
    """1/2, 3/4, 7/8, ... : each step halves the distance to 1."""
    gamma = 0.5
    while gamma < 1.0:
        yield gamma
        gamma = (1.0 + gamma) / 2.0


def _discount_mask(g: Tbsg, mode):
    mode = DiscountMode(mode)
    if mode is DiscountMode.EVERY_STEP:
        return None
    max_rows = slice(0, int(g.starts[g.n_max]))
    if np.any(g.delta[max_rows, : g.n_max] > 0):
        raise ValueError("alternate-step discounting needs every Max move to land on a Min state")
    return np.arange(g.n_states) >= g.n_max


def _full_choice(g: Tbsg, max_policy: PurePolicy | None, min_policy: PurePolicy | None, fixed: str):
    """Initial choice vector for an MDP built by fixing one player."""
    if fixed == "min":
        head = max_policy.choice if max_policy is not None else (0,) * g.n_max
        return PurePolicy(tuple(head) + (0,) * g.n_min)
    tail = min_policy.choice if min_policy is not None else (0,) * g.n_min
    return PurePolicy((0,) * g.n_max + tuple(tail))


def strategy_iteration_discounted(g: Tbsg, gamma: float, mode=DiscountMode.EVERY_STEP,
                                  tol: float = 1e-9, init: PolicyPair | None = None,
                                  max_rounds: int = MAX_IMPROVEMENT_ROUNDS) -> GameSolution:
    """Discounted equilibrium by strategy iteration.

    Each round Max plays an exact discounted best response to Min's
    current policy, then Min switches at every state where some action
    lowers the current values by more than ``tol`` (lowest index first).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {gamma}")
    mask = _discount_mask(g, mode)
    beta = discount_vector(g.n_states, gamma, mask)[g.row_state]
    is_min_row = g.row_state >= g.n_max
    min_policy = init.min_policy if init is not None else PurePolicy((0,) * g.n_min)
    max_policy = init.max_policy if init is not None else None
    inner = 0
    for rnd in range(1, max_rounds + 1):
        mdp = fix_min_policy(g, min_policy)
        sol = solve_discounted_mdp(mdp, gamma, tol, discount_mask=mask,
                                   init=_full_choice(g, max_policy, None, "min"))
        inner += sol.iterations
        V = sol.values
        max_policy = PurePolicy(sol.policy.choice[: g.n_max])
        Q = g.rewards + beta * (g.delta @ V)
        thr = max(tol, 1e-12 * max(1.0, float(np.abs(V).max())))
        improving = is_min_row & (Q < V[g.row_state] - thr)
        if not improving.any():
            return GameSolution(PolicyPair(max_policy, min_policy), V, rnd, inner)
        rows = np.flatnonzero(improving)
        states, first = np.unique(g.row_state[rows], return_index=True)
        choice = min_policy.as_array()
        choice[states - g.n_max] = rows[first] - g.starts[states]
        min_policy = PurePolicy(choice)
    raise IterationLimitError("strategy iteration did not settle",
                              best=GameSolution(PolicyPair(max_policy, min_policy), V, max_rounds, inner))


def ppe(g: Tbsg, pair: PolicyPair, ppe_tol: float = PPE_TOL, lra_tol: float = 1e-9) -> PpeResult:
    """Mutual-best-response test under the long-run average objective.

    Solves Max's average-reward MDP against ``pair.min_policy`` and Min's
    against ``pair.max_policy``; the pair is accepted when the two optimal
    gain vectors agree within ``ppe_tol`` at every state.
    """
    vs_min = solve_lra_mdp(fix_min_policy(g, pair.min_policy), lra_tol,
                           init=_full_choice(g, pair.max_policy, None, "min"))
    vs_max = solve_lra_mdp(fix_max_policy(g, pair.max_policy), lra_tol,
                           init=_full_choice(g, None, pair.min_policy, "max"))
    hi, lo = vs_min.gain_bias.gain, vs_max.gain_bias.gain
    gap = float(np.max(np.abs(hi - lo)))
    return PpeResult(gap < ppe_tol, hi, lo, gap, vs_min.iterations + vs_max.iterations)


def inner_tolerance(gamma):
    return min(1e-9, (1.0 - gamma) * 1e-6)


def rppi(m: Rmdp, ppe_tol: float = PPE_TOL, max_outer: int = MAX_OUTER) -> SolveReport:
    """Robust polytopic policy iteration for the long-run average value."""
    start = time.perf_counter()
    g, rmap = reduce(m, Objective.LIMAVG)
    pair = None
    history = []
    inner = 0
    gap = float("nan")
    for k, gamma in enumerate(discount_ladder(), start=1):
        if k > max_outer:
            break
        history.append(gamma)
        sol = strategy_iteration_discounted(g, gamma, DiscountMode.EVERY_STEP, inner_tolerance(gamma), init=pair)
        pair = sol.pair
        inner += sol.rounds
        res = ppe(g, pair, ppe_tol)
        gap = res.gap
        if res.is_optimal:
            return make_report(
                res.values[: g.n_max], m.initial,
                agent_policy=lower_agent_policy(pair.max_policy, rmap),
                env_policy=PurePolicy(lower_env_policy(pair.min_policy, rmap).ravel()),
                algorithm=Algorithm.RPPI,
                outer_iterations=k,
                inner_iterations=inner,
                final_gamma=gamma,
                wall_clock_seconds=time.perf_counter() - start,
                gamma_history=history,
                extra={"ppe_gap": gap},
            )
    raise NotConvergedError(
        f"RPPI gave up after {len(history)} discount factors (last gamma {history[-1]!r}, PPE gap {gap:.3g})",
        last_gamma=history[-1], last_gap=gap,
    )


@dataclass(frozen=True)
class VerifyResult:
    holds: bool
    inf_value: float


def verify_agent_policy(m: Rmdp, sigma: PurePolicy, v: float, ppe_tol: float = PPE_TOL) -> VerifyResult:
    """Check ``inf_pi Val(m, sigma, pi) >= v`` (up to ``ppe_tol``) by solving
    the environment's average-reward MDP in the reduced game."""
    g, rmap = reduce(m, Objective.LIMAVG)
    sol = solve_lra_mdp(fix_max_policy(g, lift_agent_policy(sigma, rmap)))
    inf_value = float(sol.gain_bias.gain[g.initial])
    return VerifyResult(inf_value >= v - ppe_tol, inf_value)
