"""Forward engines on a materialized vertex set.

``sweep``  synchronous discrete-time updates, vectorized over replicas with a
           sparse adjacency product per step.
``events`` continuous time, one replica at a time, driven by a heap of
           pending occupation times.

Both run on a :class:`LocalGraph`, which may be the whole tree or an induced
piece of it.  Vertices keep their global ids so that every piece sees the
same randomness; *driven* vertices ignore their own clocks and follow a
prescribed occupation time, which is how the boundary-driven dynamics is
realized.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .clocks import activation_int
from .geometry import TreeConfig
from .seeding import draw, exponential, uniform, vertex_keys

SWEEP_CELLS = 20_000_000
INF = math.inf


@dataclass(frozen=True)
class LocalGraph:
    ids: np.ndarray            # global vertex ids
    adj: sparse.csr_matrix     # local adjacency
    updatable: np.ndarray      # may follow the threshold rule
    forced: np.ndarray         # occupied at time 0 regardless of draws

    @property
    def n(self) -> int:
        return int(self.ids.size)


def whole_tree(tree: TreeConfig) -> LocalGraph:
    ids = np.arange(tree.n_vertices, dtype=np.int64)
    leaf = tree.is_leaf(ids)
    forced = leaf if tree.boundary == "occupied" else np.zeros_like(leaf)
    return LocalGraph(ids=ids, adj=tree.adjacency(), updatable=~leaf, forced=forced)


def induced(tree: TreeConfig, graph: LocalGraph, local_idx: np.ndarray) -> LocalGraph:
    local_idx = np.asarray(local_idx, dtype=np.int64)
    return LocalGraph(
        ids=graph.ids[local_idx],
        adj=graph.adj[local_idx][:, local_idx].tocsr(),
        updatable=graph.updatable[local_idx],
        forced=graph.forced[local_idx],
    )


def _initial(graph: LocalGraph, vk: np.ndarray, p: float) -> np.ndarray:
    return (uniform(draw(vk, 0)) < p) | graph.forced


def sweep(graph: LocalGraph, theta: int, p: float, rkeys: np.ndarray, n_steps: int,
          driven: dict | None = None) -> np.ndarray:
    """Occupation times ``(R, n)`` of synchronous dynamics; ``inf`` if never by ``n_steps``.

    ``driven`` maps local indices to ``(R,)`` arrays of prescribed times.
    """
    R, n = rkeys.size, graph.n
    chunk = max(1, SWEEP_CELLS // max(n, 1))
    if R > chunk:
        return np.concatenate([
            sweep(graph, theta, p, rkeys[i:i + chunk], n_steps, driven=_slice(driven, i, chunk))
            for i in range(0, R, chunk)
        ])
    vk = vertex_keys(rkeys[:, None], graph.ids[None, :])
    occ = _initial(graph, vk, p)
    upd = graph.updatable.copy()
    d_idx = np.zeros(0, dtype=np.int64)
    d_T = np.zeros((R, 0))
    if driven:
        d_idx = np.fromiter(driven.keys(), dtype=np.int64)
        d_T = np.stack([np.asarray(driven[i], dtype=float) for i in d_idx], axis=1)
        upd[d_idx] = False
        occ[:, d_idx] = d_T <= 0
    T = np.where(occ, 0.0, INF)
    adj_t = graph.adj.T.tocsr()
    for step in range(n_steps):
        counts = (adj_t @ occ.T.astype(np.float32)).T
        new = ~occ & upd[None, :] & (counts >= theta)
        if d_idx.size:
            new[:, d_idx] = ~occ[:, d_idx] & (d_T <= step + 1)
        if not new.any():
            if not d_idx.size or not np.any(np.isfinite(d_T) & (d_T > step + 1)):
                break
            continue
        T[new] = step + 1
        occ |= new
    return T


def _slice(driven, start, size):
    if not driven:
        return driven
    return {k: np.asarray(v)[start:start + size] for k, v in driven.items()}


def events(graph: LocalGraph, theta: int, p: float, rkey: int, t_max: float,
           clock: str = "eligibility", driven: dict | None = None) -> np.ndarray:
    """Occupation times ``(n,)`` of the continuous dynamics for one replica.

    ``driven`` maps local indices to prescribed times (scalars).
    """
    n = graph.n
    vk_arr = vertex_keys(np.uint64(rkey), graph.ids)
    occ0 = _initial(graph, vk_arr, p)
    upd = graph.updatable.copy()
    heap = []
    if driven:
        for i, t in driven.items():
            upd[i] = False
            occ0[i] = False
            if t <= t_max:
                heap.append((float(t), int(i)))
    heap.extend((0.0, int(i)) for i in np.nonzero(occ0)[0])
    heapq.heapify(heap)

    vk = vk_arr.tolist()
    delay = exponential(vk_arr, 1).tolist() if clock == "eligibility" else None
    upd = upd.tolist()
    indptr = graph.adj.indptr.tolist()
    indices = graph.adj.indices.tolist()
    T = [INF] * n
    counts = [0] * n
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        t, i = pop(heap)
        if T[i] != INF:
            continue
        T[i] = t
        for j in indices[indptr[i]:indptr[i + 1]]:
            c = counts[j] + 1
            counts[j] = c
            if c == theta and upd[j] and T[j] == INF:
                tj = t + delay[j] if delay is not None else activation_int(clock, vk[j], t)
                if tj <= t_max:
                    push(heap, (tj, j))
    return np.asarray(T)
