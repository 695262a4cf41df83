"""Seeded generators: contamination models, robust Frozen Lake, tiny random RMDPs.

Randomness comes only from ``numpy.random.PCG64(seed)`` through
``Generator.random`` (53-bit uniforms in [0, 1)). Derived draws are computed
here from those uniforms, so the output depends on the PCG64 stream alone:

* uniform point on the simplex: ``e_i = -log(1 - u_i)``, normalized;
* standard normal: Box-Muller, ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import SIMPLEX_TOL, Rmdp, check_rmdp


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def _simplex_point(u):
    e = -np.log1p(-np.asarray(u, dtype=float))
    return e / e.sum()


def _dedupe(vertices):
    out = []
    for v in vertices:
        if not any(np.all(np.abs(v - w) <= SIMPLEX_TOL) for w in out):
            out.append(v)
    return np.array(out)


# --- contamination -------------------------------------------------------------

@dataclass(frozen=True)
class ContaminationSpec:
    n: int
    R: float = 0.4
    seed: int = 0
    extra_actions: int = 10

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("contamination model needs n >= 1")
        if not 0.0 <= self.R <= 1.0:
            raise ValueError("contamination level R must lie in [0, 1]")


def gen_contamination(spec: ContaminationSpec) -> Rmdp:
    """n states, n + 10 actions; vertices (1 - R) * nominal + R * e_j for every state j.

    Rewards are N(0, sigma) with sigma ~ U(0, 1) per pair.
    """
    n, k, R = spec.n, spec.n + spec.extra_actions, float(spec.R)
    rng = make_rng(spec.seed)
    u_nominal = rng.random((n, k, n))
    u_sigma = rng.random((n, k))
    u_norm = rng.random((2, n, k))
    sigma = u_sigma
    z = np.sqrt(-2.0 * np.log1p(-u_norm[0])) * np.cos(2.0 * math.pi * u_norm[1])
    rewards = sigma * z
    eye = np.eye(n)
    polys = []
    for s in range(n):
        row = []
        for a in range(k):
            nominal = _simplex_point(u_nominal[s, a])
            row.append(_dedupe((1.0 - R) * nominal[None, :] + R * eye))
        polys.append(row)
    return check_rmdp(Rmdp(n, k, polys, rewards, 0))


# --- Frozen Lake -----------------------------------------------------------------

class LakeVariant(str, enum.Enum):
    UNICHAIN = "unichain"
    MULTICHAIN = "multichain"


ACTIONS = ("left", "right", "up", "down")
_MOVES = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}
_PERPENDICULAR = {"left": ("up", "down"), "right": ("up", "down"), "up": ("left", "right"), "down": ("left", "right")}
GYM_4X4_HOLES = ((1, 1), (1, 3), (2, 3), (3, 0))


def default_holes(n):
    """Hole layout used when none is given.

    n = 2: one hole at (0, 1); n = 4: the Gym 4x4 map; otherwise interior
    cells with both coordinates odd, which never touch each other so the
    free cells stay connected.
    """
    if n == 2:
        return ((0, 1),)
    if n == 4:
        return GYM_4X4_HOLES
    return tuple((i, j) for i in range(1, n - 1, 2) for j in range(1, n - 1, 2))


@dataclass(frozen=True)
class FrozenLakeSpec:
    n: int
    holes: tuple | None = None
    d: float = 0.2
    variant: LakeVariant = LakeVariant.UNICHAIN
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", LakeVariant(self.variant))
        holes = default_holes(self.n) if self.holes is None else self.holes
        object.__setattr__(self, "holes", tuple(sorted({(int(i), int(j)) for i, j in holes})))
        if self.n < 1:
            raise ValueError("grid side must be at least 1")
        if not 0.0 <= self.d < 1.0:
            raise ValueError("perturbation d must lie in [0, 1)")
        goal = (self.n - 1, self.n - 1)
        for h in self.holes:
            if h in ((0, 0), goal):
                raise ValueError(f"hole {h} covers the start or the goal")
            if not (0 <= h[0] < self.n and 0 <= h[1] < self.n):
                raise ValueError(f"hole {h} lies outside the grid")


def _shift_mass(p, t, inc):
    """Add ``inc`` at ``t`` and remove it evenly from the other positive
    entries, flooring at zero and spreading any shortfall over the rest."""
    q = p.copy()
    q[t] += inc
    pool = [j for j in np.flatnonzero(p > 0) if j != t]
    remaining = inc
    while remaining > 1e-15 and pool:
        share = remaining / len(pool)
        nxt = []
        for j in pool:
            take = min(q[j], share)
            q[j] -= take
            remaining -= take
            if q[j] > 1e-15:
                nxt.append(j)
            else:
                q[j] = 0.0
        pool = nxt
    return q


def gen_frozen_lake(spec: FrozenLakeSpec) -> Rmdp:
    """Slippery grid: the chosen move and each perpendicular move happen with
    probability 1/3; moves off the grid (or into a wall) stay put. The
    environment may push up to ``d`` extra mass towards any one neighbouring
    cell. Reward 1 / (1 + Manhattan distance to the goal) on free cells.

    Unichain: holes are walls and are not states. Multichain: holes are
    absorbing states with reward 0.
    """
    n, d = spec.n, float(spec.d)
    holes = set(spec.holes)
    walls = holes if spec.variant is LakeVariant.UNICHAIN else set()
    cells = [(i, j) for i in range(n) for j in range(n) if (i, j) not in walls]
    index = {c: k for k, c in enumerate(cells)}
    N = len(cells)
    goal = (n - 1, n - 1)

    def move(c, name):
        di, dj = _MOVES[name]
        t = (c[0] + di, c[1] + dj)
        return t if t in index else c

    polys = []
    rewards = np.zeros((N, len(ACTIONS)))
    for c in cells:
        row = []
        if c in holes:
            # only reachable in the multichain variant
            dirac = np.zeros(N)
            dirac[index[c]] = 1.0
            polys.append([dirac[None, :].copy() for _ in ACTIONS])
            continue
        rewards[index[c], :] = 1.0 / (1.0 + abs(goal[0] - c[0]) + abs(goal[1] - c[1]))
        neighbours = sorted({index[move(c, a)] for a in ACTIONS} - {index[c]})
        for a in ACTIONS:
            nominal = np.zeros(N)
            for b in (a, *_PERPENDICULAR[a]):
                nominal[index[move(c, b)]] += 1.0 / 3.0
            verts = [nominal]
            if d > 0:
                for t in neighbours:
                    if nominal[t] < 1.0:
                        verts.append(_shift_mass(nominal, t, min(d, 1.0 - nominal[t])))
            row.append(_dedupe(verts))
        polys.append(row)
    labels = tuple(f"r{i}c{j}" for i, j in cells)
    return check_rmdp(Rmdp(N, len(ACTIONS), polys, rewards, index[(0, 0)], labels, ACTIONS))


def support_strongly_connected(m: Rmdp) -> bool:
    """Whether every state reaches every other through some action/vertex."""
    adj = np.zeros((m.n_states, m.n_states), dtype=bool)
    for s in range(m.n_states):
        for verts in m.polytopes[s]:
            adj[s] |= np.any(verts > 0, axis=0)
    n_comp, _ = connected_components(csr_matrix(adj), directed=True, connection="strong")
    return n_comp == 1


# --- tiny random instances ----------------------------------------------------------

def gen_random_tiny(n_states: int, n_actions: int, max_vertices: int, seed: int) -> Rmdp:
    """Rewards uniform on [-1, 1]; 1..max_vertices vertices per pair, each
    uniform on the simplex, duplicates dropped."""
    if not (1 <= n_states <= 4 and 1 <= n_actions <= 3 and 1 <= max_vertices <= 3):
        raise ValueError("tiny instances need n_states <= 4, n_actions <= 3, max_vertices <= 3")
    rng = make_rng(seed)
    polys = []
    rewards = np.empty((n_states, n_actions))
    for s in range(n_states):
        row = []
        for a in range(n_actions):
            k = 1 + int(rng.random() * max_vertices)
            row.append(_dedupe([_simplex_point(rng.random(n_states)) for _ in range(k)]))
            rewards[s, a] = 2.0 * rng.random() - 1.0
        polys.append(row)
    return check_rmdp(Rmdp(n_states, n_actions, polys, rewards, 0))


def tiny_corpus(count=200, seed=0, max_states=4, max_actions=3, max_vertices=3):
    """``count`` tiny RMDPs with sizes drawn uniformly within the bounds."""
    rng = make_rng(seed)
    out = []
    for i in range(count):
        ns = 1 + int(rng.random() * max_states)
        na = 1 + int(rng.random() * max_actions)
        nv = 1 + int(rng.random() * max_vertices)
        out.append(gen_random_tiny(ns, na, nv, seed * 1_000_003 + i))
    return out
