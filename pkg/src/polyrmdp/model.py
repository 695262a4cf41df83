"""Core domain types: polytopic RMDPs, turn-based stochastic games, policies.

All models are dense and 0-indexed. Labels are display metadata only.
Instances are treated as immutable; numpy buffers are flagged read-only.
"""

from __future__ import annotations

import enum
import json
from fractions import Fraction
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ValidationError

SIMPLEX_TOL = 1e-9


class Algorithm(str, enum.Enum):
    RPPI = "rppi"
    RVI = "rvi"
    RRVI = "rrvi"
    BRUTE = "brute"
    VI = "vi"


class Objective(str, enum.Enum):
    LIMAVG = "avg"
    DISCOUNTED = "disc"


class DiscountMode(str, enum.Enum):
    EVERY_STEP = "every_step"
    ALTERNATE_STEP = "alternate_step"


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def distribution_violations(p, n, where=""):
    """Problems with ``p`` as a distribution over ``n`` states (empty if fine)."""
    p = np.asarray(p, dtype=float)
    out = []
    if p.shape != (n,):
        out.append(f"{where}: dimension {p.shape} != ({n},)")
        return out
    if not np.all(np.isfinite(p)):
        out.append(f"{where}: non-finite entry")
        return out
    if np.any(p < 0):
        out.append(f"{where}: negative entry {p.min():.3g}")
    total = p.sum()
    if abs(total - 1.0) > SIMPLEX_TOL:
        out.append(f"{where}: simplex violation, mass sums to {total:.12g}")
    return out


@dataclass(frozen=True)
class PurePolicy:
    """Pure positional policy: ``choice[i]`` is the action picked at state ``i``.

    For an ``Rmdp`` the entries are action indices. For a ``Tbsg`` player
    they are local action indices at that player's ``i``-th state.
    """

    choice: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "choice", tuple(int(c) for c in self.choice))

    def __getitem__(self, i):
        return self.choice[i]

    def __len__(self):
        return len(self.choice)

    def __iter__(self):
        return iter(self.choice)

    def as_array(self):
        return np.array(self.choice, dtype=np.intp)


@dataclass(frozen=True, eq=False)
class Rmdp:
    """Polytopic, (s,a)-rectangular robust MDP.

    ``polytopes[s][a]`` is a ``(k, n_states)`` array whose rows are the
    vertices of the uncertainty set at ``(s, a)``.
    """

    n_states: int
    n_actions: int
    polytopes: tuple
    rewards: np.ndarray
    initial: int = 0
    state_labels: tuple[str, ...] = ()
    action_labels: tuple[str, ...] = ()

    def __post_init__(self):
        polys = []
        for row in self.polytopes:
            prow = []
            for verts in row:
                v = np.array(verts, dtype=float)
                if v.size == 0:
                    v = np.zeros((0, self.n_states))
                elif v.ndim == 1:
                    v = v[None, :]
                v.setflags(write=False)
                prow.append(v)
            polys.append(tuple(prow))
        object.__setattr__(self, "polytopes", tuple(polys))
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        if not self.state_labels:
            object.__setattr__(self, "state_labels", tuple(f"s{i}" for i in range(self.n_states)))
        if not self.action_labels:
            object.__setattr__(self, "action_labels", tuple(f"a{i}" for i in range(self.n_actions)))
        object.__setattr__(self, "state_labels", tuple(self.state_labels))
        object.__setattr__(self, "action_labels", tuple(self.action_labels))

    def __eq__(self, other):
        if not isinstance(other, Rmdp):
            return NotImplemented
        return rmdp_to_dict(self) == rmdp_to_dict(other)

    __hash__ = None

    def vertices(self, s, a):
        return self.polytopes[s][a]

    @cached_property
    def vertex_counts(self):
        """``(n_states, n_actions)`` array of |V_{s,a}|."""
        return np.array([[len(v) for v in row] for row in self.polytopes], dtype=np.intp)

    @cached_property
    def vertex_matrix(self):
        """All vertices stacked row-major by (state, action, vertex)."""
        blocks = [v for row in self.polytopes for v in row]
        out = np.vstack(blocks) if blocks else np.zeros((0, self.n_states))
        out.setflags(write=False)
        return out

    @cached_property
    def pair_starts(self):
        """Offsets into ``vertex_matrix``; pair (s, a) owns rows
        ``pair_starts[s*n_actions + a] : pair_starts[s*n_actions + a + 1]``."""
        out = np.concatenate([[0], np.cumsum(self.vertex_counts.ravel())]).astype(np.intp)
        out.setflags(write=False)
        return out

    @property
    def is_singleton(self):
        return bool(np.all(self.vertex_counts == 1))


def validate_rmdp(m: Rmdp) -> list[str]:
    """Every invariant violation of ``m``; an empty list means valid."""
    out = []
    n, k = m.n_states, m.n_actions
    if n < 1:
        out.append("model has no states")
    if k < 1:
        out.append("model has no actions")
    if not 0 <= m.initial < max(n, 1):
        out.append(f"initial state {m.initial} out of range")
    if m.rewards.shape != (n, k):
        out.append(f"rewards shape {m.rewards.shape} != ({n}, {k})")
    elif not np.all(np.isfinite(m.rewards)):
        out.append("non-finite reward")
    if len(m.polytopes) != n:
        out.append(f"polytope table has {len(m.polytopes)} rows, expected {n}")
    for s, row in enumerate(m.polytopes):
        if len(row) != k:
            out.append(f"state {s}: polytope row has {len(row)} entries, expected {k}")
        for a, verts in enumerate(row):
            where = f"polytope ({s},{a})"
            if len(verts) == 0:
                out.append(f"{where}: empty polytope")
                continue
            for j, v in enumerate(verts):
                out.extend(distribution_violations(v, n, f"{where} vertex {j}"))
            if verts.shape[1:] == (n,):
                for i in range(len(verts)):
                    for j in range(i + 1, len(verts)):
                        if np.all(np.abs(verts[i] - verts[j]) <= SIMPLEX_TOL):
                            out.append(f"{where}: vertices {i} and {j} coincide")
    if len(m.state_labels) != n or len(set(m.state_labels)) != len(m.state_labels):
        out.append("state labels must be unique, one per state")
    if len(m.action_labels) != k or len(set(m.action_labels)) != len(m.action_labels):
        out.append("action labels must be unique, one per action")
    return out


def check_rmdp(m: Rmdp) -> Rmdp:
    problems = validate_rmdp(m)
    if problems:
        raise ValidationError(problems)
    return m


@dataclass(frozen=True, eq=False)
class Tbsg:
    """Turn-based stochastic game over the union state space.

    States ``0 .. n_max-1`` belong to Max, ``n_max .. n_max+n_min-1`` to Min.
    Actions are stored flat: state ``s`` owns rows ``starts[s]:starts[s+1]``
    of ``delta`` (next-state distributions), ``rewards`` and ``action_ids``
    (the owning player's global action identifier).
    """

    n_max: int
    n_min: int
    starts: np.ndarray
    delta: np.ndarray
    rewards: np.ndarray
    action_ids: np.ndarray
    initial: int = 0
    n_max_actions: int = 0
    n_min_actions: int = 0
    discount_mode: DiscountMode | None = None
    state_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "starts", _frozen(self.starts, np.intp))
        delta = np.array(self.delta, dtype=float).reshape(-1, self.n_states)
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        object.__setattr__(self, "action_ids", _frozen(self.action_ids, np.intp))
        if not self.state_labels:
            labels = [f"max{i}" for i in range(self.n_max)] + [f"min{j}" for j in range(self.n_min)]
            object.__setattr__(self, "state_labels", tuple(labels))

    @classmethod
    def from_actions(cls, n_max, n_min, actions, initial=0, **kw):
        """Build from ``actions[s] = [(action_id, reward, distribution), ...]``."""
        n = n_max + n_min
        starts = [0]
        delta, rewards, ids = [], [], []
        for s in range(n):
            for aid, rew, dist in actions[s]:
                ids.append(aid)
                rewards.append(rew)
                delta.append(dist)
            starts.append(len(ids))
        if "n_max_actions" not in kw:
            kw["n_max_actions"] = max((a + 1 for s in range(n_max) for a, _, _ in actions[s]), default=0)
        if "n_min_actions" not in kw:
            kw["n_min_actions"] = max((a + 1 for s in range(n_max, n) for a, _, _ in actions[s]), default=0)
        return cls(n_max, n_min, np.array(starts), np.array(delta, dtype=float).reshape(-1, n),
                   np.array(rewards, dtype=float), np.array(ids, dtype=np.intp), initial, **kw)

    def __eq__(self, other):
        if not isinstance(other, Tbsg):
            return NotImplemented
        return tbsg_to_dict(self) == tbsg_to_dict(other)

    __hash__ = None

    @property
    def n_states(self):
        return self.n_max + self.n_min

    @property
    def n_rows(self):
        return len(self.rewards)

    def is_max(self, s):
        return s < self.n_max

    def n_actions_at(self, s):
        return int(self.starts[s + 1] - self.starts[s])

    @cached_property
    def action_counts(self):
        return np.diff(self.starts)

    @cached_property
    def row_state(self):
        """Owning state of each flat action row."""
        return np.repeat(np.arange(self.n_states), self.action_counts)

    def rows_of(self, s):
        return range(int(self.starts[s]), int(self.starts[s + 1]))

    def policy_rows(self, max_policy: PurePolicy, min_policy: PurePolicy):
        """Flat row index picked at every state by a pair of pure policies."""
        local = np.concatenate([max_policy.as_array(), min_policy.as_array()])
        return self.starts[:-1] + local

    def check_policy(self, policy: PurePolicy, player):
        """Raise ``ValueError`` unless ``policy`` is legal for ``player``."""
        offset, count = (0, self.n_max) if player == "max" else (self.n_max, self.n_min)
        if len(policy) != count:
            raise ValueError(f"{player} policy has {len(policy)} entries, expected {count}")
        for i, c in enumerate(policy):
            if not 0 <= c < self.n_actions_at(offset + i):
                raise ValueError(f"{player} policy picks illegal action {c} at state {offset + i}")


def validate_tbsg(g: Tbsg) -> list[str]:
    out = []
    n = g.n_states
    if g.n_max < 1:
        out.append("no Max states")
    if g.n_min < 0:
        out.append("negative Min state count")
    if g.starts.shape != (n + 1,) or g.starts[0] != 0 or np.any(np.diff(g.starts) < 0):
        out.append("malformed action offsets")
        return out
    if g.starts[-1] != len(g.rewards) or len(g.action_ids) != len(g.rewards) or len(g.delta) != len(g.rewards):
        out.append("action tables disagree in length")
        return out
    if not 0 <= g.initial < g.n_max:
        out.append(f"initial state {g.initial} is not a Max state")
    if not np.all(np.isfinite(g.rewards)):
        out.append("non-finite reward")
    for s in range(n):
        owner = "Max" if g.is_max(s) else "Min"
        rows = g.rows_of(s)
        if len(rows) == 0:
            out.append(f"{owner} state {s} has no actions")
            continue
        ids = g.action_ids[rows.start:rows.stop]
        if len(set(ids.tolist())) != len(ids):
            out.append(f"{owner} state {s} repeats an action id")
        limit = g.n_max_actions if g.is_max(s) else g.n_min_actions
        if np.any(ids < 0) or np.any(ids >= limit):
            out.append(f"{owner} state {s} uses an action id outside its player's action set")
        for r in rows:
            out.extend(distribution_violations(g.delta[r], n, f"state {s} action row {r}"))
    if len(g.state_labels) != n:
        out.append("state label count mismatch")
    return out


def check_tbsg(g: Tbsg) -> Tbsg:
    problems = validate_tbsg(g)
    if problems:
        raise ValidationError(problems)
    return g


@dataclass
class SolveReport:
    value_at_initial: float
    agent_policy: PurePolicy
    algorithm: Algorithm
    values: np.ndarray | None = None
    env_policy: PurePolicy | None = None
    outer_iterations: int = 0
    inner_iterations: int = 0
    final_gamma: float | None = None
    wall_clock_seconds: float = 0.0
    gamma_history: list[float] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    initial: int = 0

    def __post_init__(self):
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=float)

    def to_dict(self, m: Rmdp | None = None):
        d = {
            "algorithm": Algorithm(self.algorithm).value,
            "value_at_initial": float(self.value_at_initial),
            "values": None if self.values is None else [float(x) for x in self.values],
            "agent_policy": _policy_out(self.agent_policy, m),
            "env_policy": None if self.env_policy is None else list(self.env_policy.choice),
            "outer_iterations": int(self.outer_iterations),
            "inner_iterations": int(self.inner_iterations),
            "final_gamma": None if self.final_gamma is None else float(self.final_gamma),
            "wall_clock_seconds": float(self.wall_clock_seconds),
            "gamma_history": [float(x) for x in self.gamma_history],
            "initial_index": int(self.initial),
        }
        if self.extra:
            d["extra"] = self.extra
        return d

    @classmethod
    def from_dict(cls, d, m: Rmdp | None = None):
        problems = report_dict_violations(d)
        if problems:
            raise ValidationError(problems)
        return cls(
            value_at_initial=d["value_at_initial"],
            agent_policy=policy_from_json(d["agent_policy"], m),
            algorithm=Algorithm(d["algorithm"]),
            values=None if d.get("values") is None else np.array(d["values"], dtype=float),
            env_policy=None if d.get("env_policy") is None else PurePolicy(d["env_policy"]),
            outer_iterations=d.get("outer_iterations", 0),
            inner_iterations=d.get("inner_iterations", 0),
            final_gamma=d.get("final_gamma"),
            wall_clock_seconds=d.get("wall_clock_seconds", 0.0),
            gamma_history=list(d.get("gamma_history", [])),
            extra=d.get("extra", {}),
            initial=d.get("initial_index", 0),
        )


def make_report(values, initial, **kw) -> SolveReport:
    """SolveReport whose headline value is read straight from ``values``."""
    values = np.asarray(values, dtype=float)
    return SolveReport(value_at_initial=float(values[initial]), values=values, initial=initial, **kw)


_REPORT_FIELDS = {
    "algorithm": str,
    "value_at_initial": (int, float),
    "agent_policy": (dict, list),
    "outer_iterations": int,
    "inner_iterations": int,
    "wall_clock_seconds": (int, float),
}


def report_dict_violations(d) -> list[str]:
    """Schema check for a serialized SolveReport."""
    if not isinstance(d, dict):
        return ["report is not an object"]
    out = []
    for key, typ in _REPORT_FIELDS.items():
        if key not in d:
            out.append(f"missing field {key!r}")
        elif not isinstance(d[key], typ) or isinstance(d[key], bool):
            out.append(f"field {key!r} has wrong type")
    if "algorithm" in d and d["algorithm"] not in {a.value for a in Algorithm}:
        out.append(f"unknown algorithm {d['algorithm']!r}")
    values = d.get("values")
    if values is not None:
        if not isinstance(values, list):
            out.append("values must be a list")
        elif "initial_index" in d and values[d["initial_index"]] != d.get("value_at_initial"):
            out.append("value_at_initial disagrees with values[initial]")
    return out


def _policy_out(policy: PurePolicy, m: Rmdp | None):
    if m is None:
        return list(policy.choice)
    return {m.state_labels[s]: m.action_labels[a] for s, a in enumerate(policy.choice)}


def policy_from_json(obj, m: Rmdp | None = None) -> PurePolicy:
    """Parse an agent policy given as a list of action indices or a
    ``{state label: action label}`` mapping. Raises ``ValueError`` if the
    policy is partial or names unknown states/actions."""
    if isinstance(obj, dict) and "agent_policy" in obj:
        obj = obj["agent_policy"]
    if isinstance(obj, dict) and "policy" in obj and isinstance(obj["policy"], (dict, list)):
        obj = obj["policy"]
    if isinstance(obj, list):
        policy = PurePolicy(obj)
    elif isinstance(obj, dict):
        if m is None:
            raise ValueError("label-keyed policy needs the model to resolve labels")
        missing = [lab for lab in m.state_labels if lab not in obj]
        if missing:
            raise ValueError(f"policy has no action for state(s) {missing}")
        unknown = set(obj) - set(m.state_labels)
        if unknown:
            raise ValueError(f"policy names unknown state(s) {sorted(unknown)}")
        acts = {lab: i for i, lab in enumerate(m.action_labels)}
        choice = []
        for lab in m.state_labels:
            a = obj[lab]
            if isinstance(a, int):
                choice.append(a)
            elif a in acts:
                choice.append(acts[a])
            else:
                raise ValueError(f"unknown action {a!r} at state {lab!r}")
        policy = PurePolicy(choice)
    else:
        raise ValueError("policy must be a list or an object")
    if m is not None:
        if len(policy) != m.n_states:
            raise ValueError(f"policy covers {len(policy)} states, model has {m.n_states}")
        if any(not 0 <= a < m.n_actions for a in policy):
            raise ValueError("policy picks an action outside the model's action set")
    return policy


# --- serialization ---------------------------------------------------------

def rmdp_to_dict(m: Rmdp) -> dict:
    return {
        "states": list(m.state_labels),
        "actions": list(m.action_labels),
        "initial": m.state_labels[m.initial],
        "rewards": m.rewards.tolist(),
        "polytopes": [[v.tolist() for v in row] for row in m.polytopes],
    }


_NOISE = 1e-12


def _load_distribution(v, n, where):
    v = np.array(v, dtype=float)
    problems = []
    if v.shape != (n,):
        problems.append(f"{where}: dimension {v.shape} != ({n},)")
    elif np.any(v < 0) or not np.all(np.isfinite(v)):
        problems.append(f"{where}: negative or non-finite entry")
    elif abs(v.sum() - 1.0) > SIMPLEX_TOL:
        problems.append(f"{where}: simplex violation, mass sums to {v.sum():.12g}")
    elif abs(v.sum() - 1.0) > _NOISE:
        # visibly off; summation noise is left alone so round-trips are exact
        v = v / v.sum()
    return v, problems


def rmdp_from_dict(d: dict) -> Rmdp:
    """Parse the canonical JSON layout; raises ``ValidationError`` on bad data.

    Vertices off the simplex by at most ``SIMPLEX_TOL`` are renormalized.
    """
    problems = []
    try:
        states = [str(x) for x in d["states"]]
        actions = [str(x) for x in d["actions"]]
        initial_label = d["initial"]
        rewards = d["rewards"]
        raw = d["polytopes"]
    except (KeyError, TypeError) as exc:
        raise ValidationError([f"missing or malformed field: {exc}"]) from None
    n, k = len(states), len(actions)
    if isinstance(initial_label, int) and not isinstance(initial_label, bool):
        initial = initial_label
    elif initial_label in states:
        initial = states.index(initial_label)
    else:
        raise ValidationError([f"initial state {initial_label!r} is not a listed state"])
    try:
        rewards = np.array(rewards, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(["rewards must be a numeric table"]) from None
    polys = []
    if not isinstance(raw, list) or len(raw) != n:
        raise ValidationError([f"polytope table must have {n} rows"])
    for s, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != k:
            raise ValidationError([f"polytope row {s} must have {k} entries"])
        prow = []
        for a, verts in enumerate(row):
            vs = []
            for j, v in enumerate(verts):
                v, errs = _load_distribution(v, n, f"polytope ({s},{a}) vertex {j}")
                problems.extend(errs)
                vs.append(v)
            prow.append(np.array(vs, dtype=float).reshape(-1, n) if vs else np.zeros((0, n)))
        polys.append(prow)
    if problems:
        raise ValidationError(problems)
    m = Rmdp(n, k, polys, rewards, initial, tuple(states), tuple(actions))
    return check_rmdp(m)


def dumps_rmdp(m: Rmdp) -> str:
    return json.dumps(rmdp_to_dict(m))


def loads_rmdp(text: str) -> Rmdp:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError([f"malformed JSON: {exc}"]) from None
    return rmdp_from_dict(d)


def tbsg_to_dict(g: Tbsg) -> dict:
    actions = []
    for s in range(g.n_states):
        actions.append([
            {"id": int(g.action_ids[r]), "reward": float(g.rewards[r]), "next": g.delta[r].tolist()}
            for r in g.rows_of(s)
        ])
    return {
        "max_states": list(g.state_labels[: g.n_max]),
        "min_states": list(g.state_labels[g.n_max:]),
        "initial": g.state_labels[g.initial],
        "n_max_actions": g.n_max_actions,
        "n_min_actions": g.n_min_actions,
        "discount_mode": None if g.discount_mode is None else DiscountMode(g.discount_mode).value,
        "actions": actions,
    }


def tbsg_from_dict(d: dict) -> Tbsg:
    try:
        max_states, min_states = list(d["max_states"]), list(d["min_states"])
        labels = max_states + min_states
        acts = [[(a["id"], a["reward"], a["next"]) for a in row] for row in d["actions"]]
        initial = labels.index(d["initial"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([f"malformed game: {exc}"]) from None
    mode = d.get("discount_mode")
    g = Tbsg.from_actions(
        len(max_states), len(min_states), acts, initial,
        n_max_actions=d.get("n_max_actions", 0), n_min_actions=d.get("n_min_actions", 0),
        discount_mode=None if mode is None else DiscountMode(mode), state_labels=tuple(labels),
    )
    return check_tbsg(g)


def trajectory_limavg(rewards_seq: Sequence[float]) -> float:
    """Prefix average (1/(N+1)) * sum_{i<=N} r_i of a finite reward sequence."""
    seq = list(rewards_seq)
    if not seq:
        raise ValueError("trajectory_limavg needs a non-empty sequence")
    # exact rational sum, rounded once
    return float(sum(map(Fraction, seq), Fraction(0)) / len(seq))
