"""Value-iteration baselines over polytope vertices.

``rvi`` climbs the same discount ladder as RPPI but solves each discounted
RMDP by robust value iteration and reads off the Abel mean
``(1 - gamma) * V_gamma(s0)``. ``rrvi`` runs relative value iteration on
the undiscounted robust operator. Both are convergent only on unichain
models (``rrvi`` also needs aperiodicity); neither condition is checked.
They stop once within ``stop_gap`` of a reference value, mirroring the
benchmark protocol.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import NotConvergedError
from .game_engine import discount_ladder
from .model import Algorithm, PurePolicy, Rmdp, SolveReport, check_rmdp, make_report


@dataclass(frozen=True, eq=False)
class RobustValueVector:
    values: np.ndarray
    iteration: int


def _worst_case(m: Rmdp, V):
    """min over vertices of v . V, as an (n_states, n_actions) table."""
    dots = m.vertex_matrix @ V
    return np.minimum.reduceat(dots, m.pair_starts[:-1]).reshape(m.n_states, m.n_actions)


def robust_bellman(m: Rmdp, V, gamma: float):
    """T V(s) = max_a [ r(s,a) + gamma * min_{v in V_{s,a}} v . V ] and the
    greedy (lowest-index) policy."""
    V = np.asarray(V, dtype=float)
    if V.shape != (m.n_states,):
        raise ValueError(f"value vector needs {m.n_states} entries")
    Q = m.rewards + gamma * _worst_case(m, V)
    greedy = Q.argmax(axis=1)
    return Q[np.arange(m.n_states), greedy], PurePolicy(greedy)


def _discounted_vi(m: Rmdp, gamma, tol, V0=None, max_iter=10_000_000):
    V = np.zeros(m.n_states) if V0 is None else np.array(V0, dtype=float)
    stop = tol * (1.0 - gamma) / (2.0 * gamma)
    for it in range(1, max_iter + 1):
        TV, policy = robust_bellman(m, V, gamma)
        diff = float(np.max(np.abs(TV - V)))
        V = TV
        if diff <= stop:
            return V, policy, it
    raise NotConvergedError("robust value iteration hit its iteration cap", last_gamma=gamma,
                            last_estimate=V)


def solve_discounted_rmdp(m: Rmdp, gamma: float, tol: float = 1e-9) -> SolveReport:
    """Robust discounted value by value iteration, accurate to ``tol``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {gamma}")
    check_rmdp(m)
    start = time.perf_counter()
    V, policy, it = _discounted_vi(m, gamma, tol)
    return make_report(V, m.initial, agent_policy=policy, algorithm=Algorithm.VI,
                       inner_iterations=it, final_gamma=gamma,
                       wall_clock_seconds=time.perf_counter() - start)


def rvi(m: Rmdp, reference_value: float, stop_gap: float = 1e-3, max_outer: int = 40) -> SolveReport:
    check_rmdp(m)
    start = time.perf_counter()
    total = 0
    history = []
    estimate = float("nan")
    for k, gamma in enumerate(discount_ladder(), start=1):
        if k > max_outer:
            break
        history.append(gamma)
        # value error tol keeps the Abel-mean error at a tenth of the gap
        V, policy, it = _discounted_vi(m, gamma, 0.1 * stop_gap / (1.0 - gamma))
        total += it
        estimate = (1.0 - gamma) * float(V[m.initial])
        if abs(estimate - reference_value) <= stop_gap:
            return make_report((1.0 - gamma) * V, m.initial, agent_policy=policy, algorithm=Algorithm.RVI,
                               outer_iterations=k, inner_iterations=total, final_gamma=gamma,
                               wall_clock_seconds=time.perf_counter() - start, gamma_history=history)
    raise NotConvergedError(f"RVI estimate {estimate:.6g} still off the reference after {len(history)} rounds",
                            last_gamma=history[-1] if history else None,
                            last_gap=abs(estimate - reference_value), last_estimate=estimate)


def rrvi(m: Rmdp, reference_value: float, stop_gap: float = 1e-3, max_iters: int = 1_000_000) -> SolveReport:
    check_rmdp(m)
    start = time.perf_counter()
    h = np.zeros(m.n_states)
    estimate = float("nan")
    for it in range(1, max_iters + 1):
        Th, policy = robust_bellman(m, h, 1.0)
        estimate = float(Th[m.initial])
        h = Th - estimate
        if abs(estimate - reference_value) <= stop_gap:
            report = make_report(np.full(m.n_states, estimate), m.initial, agent_policy=policy,
                                 algorithm=Algorithm.RRVI, inner_iterations=it,
                                 wall_clock_seconds=time.perf_counter() - start)
            report.extra["relative_values"] = h.tolist()
            return report
    raise NotConvergedError(f"RRVI estimate {estimate:.6g} still off the reference after {max_iters} sweeps",
                            last_gap=abs(estimate - reference_value), last_estimate=estimate)
