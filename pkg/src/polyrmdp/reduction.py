"""Linear-size reduction from a polytopic RMDP to a turn-based stochastic game.

Max plays the agent on copies of the RMDP states. Each state-action pair
becomes a Min state whose actions are the vertices of its uncertainty
polytope. Under the long-run average objective Max rewards are doubled so
that a two-turn round of the game carries the per-step RMDP reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    DiscountMode,
    Objective,
    PurePolicy,
    Rmdp,
    Tbsg,
    check_rmdp,
)


@dataclass(frozen=True, eq=False)
class ReductionMap:
    """Index correspondence between ``m`` and ``reduce(m)``.

    Max state indices coincide with RMDP states, Max action local indices
    with RMDP actions. Min state ``j = s * n_actions + a`` stands for the
    pair (s, a) and sits at union index ``n_states + j``. Vertex ``v`` of that
    pair is local Min action ``v`` with global id ``pair_starts[j] + v``.
    """

    n_states: int
    n_actions: int
    pair_starts: np.ndarray

    def max_state_of(self, s):
        return s

    def min_state_of(self, s, a):
        """Min player's index of the pair (s, a)."""
        return s * self.n_actions + a

    def union_index_of_pair(self, s, a):
        return self.n_states + self.min_state_of(s, a)

    def vertex_action_of(self, s, a, v):
        j = self.min_state_of(s, a)
        if not 0 <= v < self.pair_starts[j + 1] - self.pair_starts[j]:
            raise IndexError(f"pair ({s},{a}) has no vertex {v}")
        return int(self.pair_starts[j] + v)

    def state_of_max(self, i):
        return i

    def pair_of_min(self, j):
        return divmod(j, self.n_actions)

    def vertex_of_action(self, aid):
        """Inverse of ``vertex_action_of``: ``(s, a, v)``."""
        j = int(np.searchsorted(self.pair_starts, aid, side="right")) - 1
        if not 0 <= j < self.n_states * self.n_actions or aid >= self.pair_starts[-1]:
            raise IndexError(f"no Min action {aid}")
        s, a = self.pair_of_min(j)
        return s, a, int(aid - self.pair_starts[j])


def reduce(m: Rmdp, objective: Objective | str = Objective.LIMAVG) -> tuple[Tbsg, ReductionMap]:
    """Build the induced game and the index map.

    Raises ``ValidationError`` if ``m`` is invalid.
    """
    check_rmdp(m)
    objective = Objective(objective)
    n, k = m.n_states, m.n_actions
    n_pairs = n * k
    size = n + n_pairs
    scale = 2.0 if objective is Objective.LIMAVG else 1.0
    counts = m.vertex_counts.ravel()
    n_rows = n_pairs + int(counts.sum())

    starts = np.empty(size + 1, dtype=np.intp)
    starts[: n + 1] = np.arange(n + 1) * k
    starts[n + 1:] = n_pairs + np.cumsum(counts)
    delta = np.zeros((n_rows, size))
    rewards = np.zeros(n_rows)
    ids = np.empty(n_rows, dtype=np.intp)

    # Max rows: Dirac onto the pair state
    delta[np.arange(n_pairs), n + np.arange(n_pairs)] = 1.0
    rewards[:n_pairs] = scale * m.rewards.ravel()
    ids[:n_pairs] = np.tile(np.arange(k), n)
    # Min rows: the vertices themselves over the Max copies
    delta[n_pairs:, :n] = m.vertex_matrix
    ids[n_pairs:] = np.arange(n_rows - n_pairs)

    labels = list(m.state_labels) + [
        f"({m.state_labels[s]},{m.action_labels[a]})" for s in range(n) for a in range(k)
    ]
    g = Tbsg(
        n_max=n,
        n_min=n_pairs,
        starts=starts,
        delta=delta,
        rewards=rewards,
        action_ids=ids,
        initial=m.initial,
        n_max_actions=k,
        n_min_actions=int(counts.sum()),
        discount_mode=DiscountMode.ALTERNATE_STEP if objective is Objective.DISCOUNTED else None,
        state_labels=tuple(labels),
    )
    return g, ReductionMap(n, k, m.pair_starts.copy())


def reduction_size(m: Rmdp) -> dict:
    """Closed-form size of ``reduce(m)``."""
    n, k = m.n_states, m.n_actions
    total_vertices = int(m.vertex_counts.sum())
    return {
        "n_states_G": n + n * k,
        "n_actions_G": k + total_vertices,
        "n_transition_entries_G": n * k + total_vertices * n,
    }


def counted_size(g: Tbsg) -> dict:
    """Sizes counted directly off a reduced game.

    Transition entries count the support of each Max row and the Max-copy
    block (one entry per RMDP state) of each Min row.
    """
    max_rows = slice(0, int(g.starts[g.n_max]))
    min_rows = slice(int(g.starts[g.n_max]), g.n_rows)
    max_ids = set(g.action_ids[max_rows].tolist())
    min_ids = set(g.action_ids[min_rows].tolist())
    entries = int(np.count_nonzero(g.delta[max_rows])) + (g.n_rows - max_rows.stop) * g.n_max
    return {
        "n_states_G": g.n_states,
        "n_actions_G": len(max_ids) + len(min_ids),
        "n_transition_entries_G": entries,
    }


def lift_agent_policy(sigma: PurePolicy, rmap: ReductionMap) -> PurePolicy:
    if len(sigma) != rmap.n_states:
        raise ValueError("agent policy must cover every RMDP state")
    out = [0] * rmap.n_states
    for s, a in enumerate(sigma):
        out[rmap.max_state_of(s)] = a
    return PurePolicy(out)


def lower_agent_policy(max_policy: PurePolicy, rmap: ReductionMap) -> PurePolicy:
    return PurePolicy([max_policy[rmap.max_state_of(s)] for s in range(rmap.n_states)])


def lift_env_policy(selection, rmap: ReductionMap) -> PurePolicy:
    """Min policy choosing vertex ``selection[s][a]`` at every pair state."""
    sel = np.asarray(selection, dtype=np.intp)
    if sel.shape != (rmap.n_states, rmap.n_actions):
        raise ValueError("vertex selection must be a full (state, action) table")
    out = [0] * (rmap.n_states * rmap.n_actions)
    for s in range(rmap.n_states):
        for a in range(rmap.n_actions):
            rmap.vertex_action_of(s, a, int(sel[s, a]))  # bounds check
            out[rmap.min_state_of(s, a)] = int(sel[s, a])
    return PurePolicy(out)


def lower_env_policy(min_policy: PurePolicy, rmap: ReductionMap) -> np.ndarray:
    """Vertex-selection table of a Min policy on the reduced game."""
    sel = np.empty((rmap.n_states, rmap.n_actions), dtype=np.intp)
    for j, v in enumerate(min_policy):
        s, a = rmap.pair_of_min(j)
        sel[s, a] = v
    return sel
