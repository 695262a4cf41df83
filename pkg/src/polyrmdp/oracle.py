"""Brute-force ground truth for tiny RMDPs and games.

Values of fixed policy pairs come from the Cesaro limit matrix
``P* = R (L^T R)^{-1} L^T``, with ``R`` / ``L`` bases of the right / left null
spaces of ``I - P``. That route shares no code with the gain/bias policy
evaluation in ``mdp_engine``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import BudgetExceeded
from .game_engine import PolicyPair
from .mdp_engine import fix_agent, fix_environment, fix_max_policy, solve_lra_mdp
from .model import PurePolicy, Rmdp, Tbsg, check_rmdp, check_tbsg


@dataclass(frozen=True)
class EnumerationBudget:
    max_agent_policies: int = 10_000
    max_env_policies: int = 1_000_000

    def __post_init__(self):
        if self.max_agent_policies < 1 or self.max_env_policies < 1:
            raise ValueError("enumeration budgets must be positive")


@dataclass
class BruteResult:
    maxmin: float
    minmax: float | None
    argmax_policy: PurePolicy
    mode: str = "full"
    fell_back: bool = False
    evaluations: int = 0
    extra: dict = field(default_factory=dict)


def limiting_matrix(P):
    """Cesaro limit of the powers of a stochastic matrix."""
    n = len(P)
    A = np.eye(n) - P
    R = null_space(A, rcond=1e-10)
    L = null_space(A.T, rcond=1e-10)
    return R @ np.linalg.solve(L.T @ R, L.T)


def chain_limavg(P, r):
    """Long-run average reward from every state of a Markov reward chain."""
    return limiting_matrix(np.asarray(P, dtype=float)) @ np.asarray(r, dtype=float)


def policy_pair_limavg(m: Rmdp, sigma: PurePolicy, selection) -> np.ndarray:
    """Per-state long-run average of the chain induced by agent policy
    ``sigma`` and vertex selection ``selection[s][a]``."""
    sel = np.asarray(selection, dtype=np.intp)
    P = np.array([m.polytopes[s][sigma[s]][sel[s, sigma[s]]] for s in range(m.n_states)])
    r = np.array([m.rewards[s, sigma[s]] for s in range(m.n_states)])
    return chain_limavg(P, r)


def _enumerate(sigmas, relevant, radices, n_pi_total, evaluate):
    """max-min and min-max at the initial state over pure positional pairs.

    ``relevant(sigma)`` lists the Min positions whose choice can influence
    the value under ``sigma``; ``evaluate(sigma, partial)`` takes a dict
    position -> choice on those positions. Values are cached per distinct
    (sigma, partial) and then laid out over all full Min policies.
    """
    radices = np.asarray(radices, dtype=np.intp)
    # mixed-radix digits of every full Min policy, position-major
    digit_type = np.uint8 if radices.max(initial=1) < 256 else np.intp
    grids = np.indices(tuple(radices), dtype=digit_type).reshape(len(radices), -1)
    best_max = -np.inf
    argmax = None
    col_max = np.full(n_pi_total, -np.inf)
    evals = 0
    for sigma in sigmas:
        pos = relevant(sigma)
        combos = list(itertools.product(*(range(radices[p]) for p in pos)))
        vals = np.empty(len(combos))
        for i, combo in enumerate(combos):
            vals[i] = evaluate(sigma, dict(zip(pos, combo)))
        evals += len(combos)
        worst = float(vals.min())
        if worst > best_max + 1e-12 or argmax is None:
            best_max, argmax = worst, sigma
        idx = np.zeros(grids.shape[1], dtype=np.intp)
        for p in pos:
            idx = idx * radices[p] + grids[p]
        np.maximum(col_max, vals[idx], out=col_max)
    minmax = float(col_max.min())
    return best_max, minmax, argmax, evals


def _count_pi(radices):
    return int(np.prod(np.asarray(radices, dtype=object))) if len(radices) else 1


def brute_force_value(m: Rmdp, budget: EnumerationBudget | None = None, mode="auto") -> BruteResult:
    """Exact value of ``m`` by enumerating pure positional policies.

    ``mode="full"`` enumerates agent policies and vertex selections;
    ``"hybrid"`` enumerates agent policies and lets an average-reward MDP
    solver find the environment's best response (and, when the selection
    count fits the budget, does the mirror image for min-max). ``"auto"``
    picks full when it fits the budget and falls back to hybrid otherwise.
    """
    check_rmdp(m)
    budget = budget or EnumerationBudget()
    n, k = m.n_states, m.n_actions
    n_sigma = k ** n
    radices = m.vertex_counts.ravel().tolist()
    n_pi = _count_pi(radices)
    if n_sigma > budget.max_agent_policies:
        raise BudgetExceeded(f"{n_sigma} agent policies exceed the budget of {budget.max_agent_policies}")
    fell_back = False
    if mode == "auto":
        mode = "full" if n_pi <= budget.max_env_policies else "hybrid"
        fell_back = mode == "hybrid"
    sigmas = [PurePolicy(c) for c in itertools.product(range(k), repeat=n)]

    if mode == "full":
        if n_pi > budget.max_env_policies:
            raise BudgetExceeded(f"{n_pi} environment policies exceed the budget of {budget.max_env_policies}")

        def relevant(sigma):
            return [s * k + sigma[s] for s in range(n)]

        def evaluate(sigma, partial):
            sel = np.zeros((n, k), dtype=np.intp)
            for p, c in partial.items():
                sel.flat[p] = c
            return policy_pair_limavg(m, sigma, sel)[m.initial]

        maxmin, minmax, argmax, evals = _enumerate(sigmas, relevant, radices, n_pi, evaluate)
        return BruteResult(maxmin, minmax, argmax, "full", fell_back, evals)

    # hybrid
    best, argmax = -np.inf, None
    for sigma in sigmas:
        v = float(solve_lra_mdp(fix_agent(m, sigma)).gain_bias.gain[m.initial])
        if v > best + 1e-12 or argmax is None:
            best, argmax = v, sigma
    minmax = None
    evals = n_sigma
    if n_pi <= budget.max_env_policies:
        minmax = np.inf
        for combo in itertools.product(*(range(c) for c in radices)):
            sel = np.array(combo, dtype=np.intp).reshape(n, k)
            minmax = min(minmax, float(solve_lra_mdp(fix_environment(m, sel)).gain_bias.gain[m.initial]))
        evals += n_pi
    return BruteResult(best, minmax, argmax, "hybrid", fell_back, evals)


def brute_force_tbsg_value(g: Tbsg, budget: EnumerationBudget | None = None) -> BruteResult:
    """Exact max-min and min-max of a game over pure positional pairs."""
    check_tbsg(g)
    budget = budget or EnumerationBudget()
    max_counts = [g.n_actions_at(s) for s in range(g.n_max)]
    min_counts = [g.n_actions_at(g.n_max + j) for j in range(g.n_min)]
    n_sigma = _count_pi(max_counts)
    n_pi = _count_pi(min_counts)
    if n_sigma > budget.max_agent_policies or n_pi > budget.max_env_policies:
        raise BudgetExceeded(f"game has {n_sigma} x {n_pi} pure positional pairs, over budget")
    sigmas = [PurePolicy(c) for c in itertools.product(*(range(c) for c in max_counts))]
    support = [[set(np.flatnonzero(g.delta[r] > 0).tolist()) for r in g.rows_of(s)] for s in range(g.n_states)]

    def relevant(sigma):
        # Min states reachable from the start whatever Min plays
        seen, stack = {g.initial}, [g.initial]
        while stack:
            s = stack.pop()
            nxt = support[s][sigma[s]] if s < g.n_max else set().union(*support[s])
            for t in nxt - seen:
                seen.add(t)
                stack.append(t)
        return sorted(s - g.n_max for s in seen if s >= g.n_max)

    def evaluate(sigma, partial):
        pi = PurePolicy([partial.get(j, 0) for j in range(g.n_min)])
        rows = g.policy_rows(sigma, pi)
        return chain_limavg(g.delta[rows], g.rewards[rows])[g.initial]

    maxmin, minmax, argmax, evals = _enumerate(sigmas, relevant, min_counts, n_pi, evaluate)
    return BruteResult(maxmin, minmax, argmax, "full", False, evals)


def game_pair_limavg(g: Tbsg, pair: PolicyPair) -> np.ndarray:
    rows = g.policy_rows(pair.max_policy, pair.min_policy)
    return chain_limavg(g.delta[rows], g.rewards[rows])


def hybrid_tbsg_maxmin(g: Tbsg) -> float:
    """max over Max policies of Min's average-reward best response."""
    max_counts = [g.n_actions_at(s) for s in range(g.n_max)]
    return max(float(solve_lra_mdp(fix_max_policy(g, PurePolicy(c))).gain_bias.gain[g.initial])
               for c in itertools.product(*(range(c) for c in max_counts)))

