"""Exact occupation times of a single vertex by backward light-cone exploration.

On a tree the occupation time of ``x`` only depends on the *directed*
messages ``m(y -> x)``: the time ``y`` would be occupied in the component of
the tree minus ``x`` that contains ``y``.  With ``S`` the ``theta``-th
smallest incoming message,

    m(y -> x) = 0                                   if y is initially occupied
              = clock_y(S of messages z -> y, z != x)   otherwise

and ``T_x`` is the same formula with all neighbours of ``x``.  This is the
boundary-driven coupling applied recursively; it reproduces the forward
dynamics bit for bit because it consumes the same counter-based draws.

Only ``T_x <= horizon`` is resolved.  A vertex whose message cannot be
``<= B`` is cut off with the child budget of its clock, so the explored cone
stays finite even on very large trees.

``explore`` walks the cone breadth first, vectorized over replicas.
``dfs`` walks it depth first for one replica at a time, looking at occupied
neighbours first and tightening the deadline to the current ``theta``-th
smallest message; it is the cheaper choice deep in the supercritical regime.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

from ..errors import ResourceError
from .clocks import activation, activation_int, child_budget, child_budget_int
from .geometry import TreeConfig
from .seeding import draw, uniform, uniform_int, vertex_key_int, vertex_keys

MAX_CONE = 30_000_000
INF = math.inf


def _resolve(tree: TreeConfig, theta, p, clock, rep, vid, lvl, B, rkeys):
    """Messages that are known without recursion, and the nodes still to expand."""
    vk = vertex_keys(rkeys[rep], vid)
    occ = uniform(draw(vk, 0)) < p
    leaf = lvl == tree.L
    if tree.boundary == "occupied":
        occ |= leaf
    m = np.where(occ, 0.0, INF)
    open_ = ~occ & ~leaf
    cb = np.full(vid.shape, -INF)
    if open_.any():
        cb[open_] = child_budget(clock, vk[open_], B[open_])
    expand = open_ & (cb >= 0)
    return m, expand, vk, cb


def explore(tree: TreeConfig, theta: int, p: float, rkeys: np.ndarray, root: int,
            clock: str, horizon: float, max_cone: int = MAX_CONE) -> np.ndarray:
    """``T_root`` for every replica key, ``inf`` when above ``horizon``."""
    R = rkeys.size
    rep = np.arange(R, dtype=np.int64)
    vid = np.full(R, root, dtype=np.int64)
    frm = np.full(R, -1, dtype=np.int64)
    lvl = tree.level_of(vid)
    B = np.full(R, float(horizon))

    stack = []
    total = 0
    while True:
        m, expand, vk, cb = _resolve(tree, theta, p, clock, rep, vid, lvl, B, rkeys)
        e = np.nonzero(expand)[0]
        level = {"m": m, "e": e, "vk": vk[e], "B": B[e]}
        stack.append(level)
        total += vid.size
        if e.size == 0:
            break
        if total + e.size * tree.max_degree > max_cone:
            raise ResourceError(
                f"light cone exceeds {max_cone} vertices; lower the horizon or replica chunk"
            )
        nb = tree.neighbour_matrix(vid[e], lvl[e])
        valid = (nb >= 0) & (nb != frm[e][:, None])
        pi, col = np.nonzero(valid)
        level["pi"], level["col"] = pi, col
        level["D"] = nb.shape[1]
        rep = rep[e][pi]
        frm = vid[e][pi]
        vid = nb[pi, col]
        lvl = tree.level_of(vid)
        B = cb[e][pi]

    # fold messages back up the cone
    for depth in range(len(stack) - 1, 0, -1):
        parent, child = stack[depth - 1], stack[depth]
        n_par = parent["e"].size
        M = np.full((n_par, parent["D"]), INF)
        M[parent["pi"], parent["col"]] = child["m"]
        if theta <= parent["D"]:
            S = np.partition(M, theta - 1, axis=1)[:, theta - 1]
        else:
            S = np.full(n_par, INF)
        T = np.full(n_par, INF)
        ok = np.isfinite(S)
        if ok.any():
            T[ok] = activation(clock, parent["vk"][ok], S[ok])
        T[T > parent["B"]] = INF
        parent["m"][parent["e"]] = T
    return stack[0]["m"]


class _Dfs:
    def __init__(self, tree: TreeConfig, theta: int, p: float, clock: str):
        self.tree, self.theta, self.p, self.clock = tree, theta, p, clock
        self.occupied_leaves = tree.boundary == "occupied"

    def occupied(self, vk: int, k: int) -> bool:
        return (k == self.tree.L and self.occupied_leaves) or uniform_int(vk, 0) < self.p

    def message(self, rkey: int, v: int, vk: int, k: int, frm: int, B: float) -> float:
        if self.occupied(vk, k):
            return 0.0
        tree, theta = self.tree, self.theta
        if k == tree.L:
            return INF
        cb = child_budget_int(self.clock, vk, B)
        if cb < 0:
            return INF
        best = []
        vacant = []
        for u in tree.neighbours_int(v, k):
            if u == frm:
                continue
            ku = k - 1 if u < v else k + 1
            vu = vertex_key_int(rkey, u)
            if self.occupied(vu, ku):
                best.append(0.0)
            else:
                vacant.append((u, vu, ku))
        remaining = len(vacant)
        for u, vu, ku in vacant:
            if len(best) >= theta and best[theta - 1] == 0.0:
                break
            if len(best) + remaining < theta:
                return INF
            remaining -= 1
            deadline = cb if len(best) < theta else min(cb, best[theta - 1])
            val = self.message(rkey, u, vu, ku, v, deadline)
            if val <= deadline:
                bisect.insort(best, val)
        if len(best) < theta:
            return INF
        T = activation_int(self.clock, vk, best[theta - 1])
        return T if T <= B else INF


def dfs(tree: TreeConfig, theta: int, p: float, rkeys: np.ndarray, root: int,
        clock: str, horizon: float) -> np.ndarray:
    """Same contract as :func:`explore`, one replica at a time."""
    walker = _Dfs(tree, theta, p, clock)
    k = tree.level_of_int(root)
    out = np.empty(rkeys.size)
    for i, rk in enumerate(rkeys.tolist()):
        out[i] = walker.message(rk, root, vertex_key_int(rk, root), k, -1, float(horizon))
    return out


def deepening(engine, tree: TreeConfig, theta: int, p: float, rkeys: np.ndarray, root: int,
              clock: str, horizon: float, start: float = 2.0) -> np.ndarray:
    """Run ``engine`` with budgets ``start, 2 start, ...`` up to ``horizon``.

    A truncated run is exact wherever it returns a finite time, so only the
    unresolved replicas are retried.  The cone grows roughly exponentially
    with the budget, which makes the retries cheap, and early resolution
    pays off heavily when most occupation times are far below the horizon.
    """
    out = np.full(rkeys.size, INF)
    todo = np.arange(rkeys.size)
    budget = float(start)
    while todo.size:
        budget = min(budget, float(horizon))
        T = engine(tree, theta, p, rkeys[todo], root, clock, budget)
        out[todo] = T
        todo = todo[~np.isfinite(T)]
        if budget >= horizon:
            break
        budget *= 2.0
    return out
