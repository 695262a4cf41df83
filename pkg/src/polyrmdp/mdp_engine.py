"""Exact solvers for ordinary MDPs: discounted policy iteration and
multichain long-run average (gain/bias) policy iteration.

These are the one-player subproblems left after fixing one side of a game
or an RMDP.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import IterationLimitError, NumericalError
from .model import PurePolicy, Rmdp, Tbsg, distribution_violations

LINSOLVE_TOL = 1e-9
MAX_IMPROVEMENT_ROUNDS = 10_000


class Sense(str, enum.Enum):
    MAX = "max"
    MIN = "min"


@dataclass(frozen=True, eq=False)
class Mdp:
    """Flat MDP: state ``s`` owns rows ``starts[s]:starts[s+1]``."""

    starts: np.ndarray
    delta: np.ndarray
    rewards: np.ndarray
    optimize: Sense = Sense.MAX

    def __post_init__(self):
        object.__setattr__(self, "starts", np.asarray(self.starts, dtype=np.intp))
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=float))
        object.__setattr__(self, "optimize", Sense(self.optimize))
        object.__setattr__(self, "row_state", np.repeat(np.arange(self.n_states), np.diff(self.starts)))

    @classmethod
    def from_actions(cls, actions, optimize=Sense.MAX):
        """``actions[s] = [(reward, distribution), ...]``."""
        n = len(actions)
        starts, delta, rewards = [0], [], []
        for row in actions:
            for rew, dist in row:
                rewards.append(rew)
                delta.append(dist)
            starts.append(len(rewards))
        return cls(np.array(starts), np.array(delta, dtype=float).reshape(-1, n), np.array(rewards), optimize)

    @property
    def n_states(self):
        return len(self.starts) - 1

    @property
    def n_rows(self):
        return len(self.rewards)

    def n_actions_at(self, s):
        return int(self.starts[s + 1] - self.starts[s])

    def rows(self, policy):
        return self.starts[:-1] + np.asarray(policy.choice if isinstance(policy, PurePolicy) else policy, dtype=np.intp)

    def chain(self, policy):
        """Transition matrix and reward vector of the fixed-policy chain."""
        rows = self.rows(policy)
        return self.delta[rows], self.rewards[rows]

    def check_policy(self, policy):
        if len(policy) != self.n_states:
            raise ValueError(f"policy has {len(policy)} entries, MDP has {self.n_states} states")
        for s, c in enumerate(policy):
            if not 0 <= c < self.n_actions_at(s):
                raise ValueError(f"illegal action {c} at state {s}")


def validate_mdp(m: Mdp) -> list[str]:
    out = []
    counts = np.diff(m.starts)
    for s in np.flatnonzero(counts <= 0):
        out.append(f"state {s} has no actions")
    for r in range(m.n_rows):
        out.extend(distribution_violations(m.delta[r], m.n_states, f"row {r}"))
    return out


# --- building MDPs from games / RMDPs --------------------------------------

def _restrict(starts, delta, rewards, fixed_rows: dict, optimize):
    n = len(starts) - 1
    keep = []
    new_starts = [0]
    for s in range(n):
        if s in fixed_rows:
            keep.append(fixed_rows[s])
        else:
            keep.extend(range(int(starts[s]), int(starts[s + 1])))
        new_starts.append(len(keep))
    keep = np.array(keep, dtype=np.intp)
    return Mdp(np.array(new_starts), delta[keep], rewards[keep], optimize)


def fix_min_policy(g: Tbsg, min_policy: PurePolicy) -> Mdp:
    """Max's MDP after Min commits to ``min_policy`` (union state space)."""
    g.check_policy(min_policy, "min")
    fixed = {g.n_max + j: int(g.starts[g.n_max + j]) + c for j, c in enumerate(min_policy)}
    return _restrict(g.starts, g.delta, g.rewards, fixed, Sense.MAX)


def fix_max_policy(g: Tbsg, max_policy: PurePolicy) -> Mdp:
    """Min's MDP after Max commits to ``max_policy`` (union state space)."""
    g.check_policy(max_policy, "max")
    fixed = {i: int(g.starts[i]) + c for i, c in enumerate(max_policy)}
    return _restrict(g.starts, g.delta, g.rewards, fixed, Sense.MIN)


def fix_environment(m: Rmdp, selection) -> Mdp:
    """Agent's MDP when the environment always plays vertex ``selection[s][a]``."""
    sel = np.asarray(selection, dtype=np.intp)
    acts = [[(m.rewards[s, a], m.polytopes[s][a][sel[s, a]]) for a in range(m.n_actions)]
            for s in range(m.n_states)]
    return Mdp.from_actions(acts, Sense.MAX)


def fix_agent(m: Rmdp, sigma: PurePolicy) -> Mdp:
    """Environment's MDP against ``sigma``: actions are the vertices of (s, sigma(s))."""
    acts = [[(m.rewards[s, sigma[s]], v) for v in m.polytopes[s][sigma[s]]] for s in range(m.n_states)]
    return Mdp.from_actions(acts, Sense.MIN)


# --- discounted --------------------------------------------------------------

class DiscountedSolution(NamedTuple):
    values: np.ndarray
    policy: PurePolicy
    iterations: int


def _solve(A, b, what):
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what}: singular system ({exc})") from None
    resid = float(np.max(np.abs(A @ x - b), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)), float(np.max(np.abs(x), initial=0.0)))
    if not np.all(np.isfinite(x)) or resid > LINSOLVE_TOL * scale:
        raise NumericalError(f"{what}: residual {resid:.3g} exceeds tolerance", residual=resid)
    return x


def _first_improving(m: Mdp, improving_rows, choice):
    """Switch each state with an improving row to its lowest-index one."""
    if not improving_rows.any():
        return choice, False
    rows = np.flatnonzero(improving_rows)
    states, first = np.unique(m.row_state[rows], return_index=True)
    new = choice.copy()
    new[states] = rows[first] - m.starts[states]
    return new, True


def discount_vector(n_states, gamma, mask=None):
    """Per-state discount: ``gamma`` where ``mask`` is true (all states if None), else 1."""
    if mask is None:
        return np.full(n_states, float(gamma))
    return np.where(np.asarray(mask, dtype=bool), float(gamma), 1.0)


def solve_discounted_mdp(m: Mdp, gamma: float, tol: float = 1e-12, *, discount_mask=None,
                         init: PurePolicy | None = None,
                         max_iter: int = MAX_IMPROVEMENT_ROUNDS) -> DiscountedSolution:
    """Howard policy iteration for the discounted criterion.

    With ``discount_mask`` the discount applies only on steps leaving
    masked states; the caller must make sure every cycle crosses one.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {gamma}")
    n = m.n_states
    beta = discount_vector(n, gamma, discount_mask)
    sign = 1.0 if m.optimize is Sense.MAX else -1.0
    rewards = sign * m.rewards
    choice = np.zeros(n, dtype=np.intp) if init is None else init.as_array().copy()
    eye = np.eye(n)
    row_beta = beta[m.row_state]
    for it in range(1, max_iter + 1):
        rows = m.starts[:-1] + choice
        V = _solve(eye - beta[:, None] * m.delta[rows], rewards[rows], "discounted evaluation")
        Q = rewards + row_beta * (m.delta @ V)
        thr = max(tol, 1e-12 * max(1.0, float(np.abs(V).max())))
        choice, changed = _first_improving(m, Q > V[m.row_state] + thr, choice)
        if not changed:
            return DiscountedSolution(sign * V, PurePolicy(choice), it)
    raise IterationLimitError("discounted policy iteration did not settle",
                              best=DiscountedSolution(sign * V, PurePolicy(choice), max_iter))


def discounted_policy_values(m: Mdp, policy, gamma, discount_mask=None):
    """Discounted values of a fixed policy."""
    n = m.n_states
    beta = discount_vector(n, gamma, discount_mask)
    P, r = m.chain(policy)
    return _solve(np.eye(n) - beta[:, None] * P, r, "discounted evaluation")


def bellman_optimality(m: Mdp, V, gamma, discount_mask=None):
    """One application of the discounted optimality operator."""
    beta = discount_vector(m.n_states, gamma, discount_mask)
    Q = m.rewards + beta[m.row_state] * (m.delta @ V)
    red = np.maximum if m.optimize is Sense.MAX else np.minimum
    return red.reduceat(Q, m.starts[:-1])


# --- long-run average ----------------------------------------------------------

@dataclass(frozen=True)
class ChainDecomposition:
    recurrent_classes: list
    transient: np.ndarray
    class_of: np.ndarray  # -1 on transient states


@dataclass(frozen=True, eq=False)
class GainBias:
    gain: np.ndarray
    bias: np.ndarray


class LraSolution(NamedTuple):
    gain_bias: GainBias
    policy: PurePolicy
    iterations: int


def decompose(P) -> ChainDecomposition:
    """Recurrent classes are the bottom strongly connected components of
    the support graph of ``P``; classes are ordered by smallest member."""
    n = P.shape[0]
    graph = csr_matrix(P > 0)
    _, labels = connected_components(graph, directed=True, connection="strong")
    src, dst = graph.nonzero()
    leaving = labels[src] != labels[dst]
    not_bottom = set(labels[src[leaving]].tolist())
    classes = {}
    for s in range(n):
        if labels[s] not in not_bottom:
            classes.setdefault(labels[s], []).append(s)
    recurrent = sorted((np.array(c, dtype=np.intp) for c in classes.values()), key=lambda c: c[0])
    class_of = np.full(n, -1, dtype=np.intp)
    for i, c in enumerate(recurrent):
        class_of[c] = i
    return ChainDecomposition(recurrent, np.flatnonzero(class_of < 0), class_of)


def chain_decompose(m: Mdp, policy: PurePolicy) -> ChainDecomposition:
    m.check_policy(policy)
    P, _ = m.chain(policy)
    return decompose(P)


def _stationary(Pc):
    k = len(Pc)
    A = Pc.T - np.eye(k)
    A[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    x = _solve(A, b, "stationary distribution")
    if np.any(x < -LINSOLVE_TOL):
        raise NumericalError("stationary distribution has negative mass")
    return np.clip(x, 0.0, None)


def evaluate_chain(P, r, normalization="reference", decomposition=None) -> GainBias:
    """Gain and bias of a Markov reward chain.

    ``normalization`` fixes the per-class constant in the bias: ``"reference"``
    sets it to zero at the lowest-index state of each recurrent class,
    ``"stationary"`` makes its stationary mean zero (the true bias).
    """
    n = len(r)
    dec = decomposition or decompose(P)
    g = np.zeros(n)
    h = np.zeros(n)
    for C in dec.recurrent_classes:
        Pc = P[np.ix_(C, C)]
        pi = _stationary(Pc)
        gc = float(pi @ r[C])
        g[C] = gc
        A = np.eye(len(C)) - Pc
        b = r[C] - gc
        if normalization == "reference":
            A[0, :] = 0.0
            A[0, 0] = 1.0
        else:
            A[0, :] = pi
        b[0] = 0.0
        h[C] = _solve(A, b, "recurrent bias")
    T = dec.transient
    if len(T):
        R = np.flatnonzero(dec.class_of >= 0)
        A = np.eye(len(T)) - P[np.ix_(T, T)]
        PTR = P[np.ix_(T, R)]
        g[T] = _solve(A, PTR @ g[R], "transient gain")
        h[T] = _solve(A, r[T] - g[T] + PTR @ h[R], "transient bias")
    scale = max(1.0, float(np.abs(r).max(initial=0.0)), float(np.abs(h).max(initial=0.0)))
    resid = max(float(np.abs(g - P @ g).max(initial=0.0)), float(np.abs(g + h - r - P @ h).max(initial=0.0)))
    if resid > LINSOLVE_TOL * scale:
        raise NumericalError(f"gain/bias residual {resid:.3g} exceeds tolerance", residual=resid)
    return GainBias(g, h)


def evaluate_policy_lra(m: Mdp, policy: PurePolicy, normalization="reference") -> GainBias:
    m.check_policy(policy)
    P, r = m.chain(policy)
    return evaluate_chain(P, r, normalization)


def solve_lra_mdp(m: Mdp, tol: float = 1e-9, *, init: PurePolicy | None = None,
                  max_iter: int = MAX_IMPROVEMENT_ROUNDS) -> LraSolution:
    """Multichain Howard policy iteration (gain step, then bias step on gain ties).

    Returns gain/bias in the ``"stationary"`` normalization.
    """
    sign = 1.0 if m.optimize is Sense.MAX else -1.0
    rewards = sign * m.rewards
    choice = np.zeros(m.n_states, dtype=np.intp) if init is None else init.as_array().copy()
    rs = m.row_state
    for it in range(1, max_iter + 1):
        rows = m.starts[:-1] + choice
        gb = evaluate_chain(m.delta[rows], rewards[rows], "stationary")
        g, h = gb.gain, gb.bias
        thr = max(tol, 1e-12 * max(1.0, float(np.abs(h).max()), float(np.abs(g).max())))
        gq = m.delta @ g
        choice, changed = _first_improving(m, gq > g[rs] + thr, choice)
        if not changed:
            bq = rewards + m.delta @ h
            ties = gq >= g[rs] - thr
            choice, changed = _first_improving(m, ties & (bq > bq[rows][rs] + thr), choice)
        if not changed:
            return LraSolution(GainBias(sign * g, sign * h), PurePolicy(choice), it)
    raise IterationLimitError("average-reward policy iteration did not settle",
                              best=LraSolution(GainBias(sign * g, sign * h), PurePolicy(choice), max_iter))
