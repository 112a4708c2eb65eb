"""Level-indexed finite trees with implicit adjacency.

Vertices are numbered breadth first, level by level.  Level ``k`` occupies
ids ``off[k] .. off[k+1]-1`` and every vertex on it has ``cpv[k]`` children,
so parent and children follow from integer arithmetic::

    parent(v)   = off[k-1] + (v - off[k]) // cpv[k-1]
    children(v) = off[k+1] + (v - off[k]) * cpv[k] + j,   0 <= j < cpv[k]

``rooted`` is the depth-``L`` tree in which every non-leaf has ``b``
children (the root has degree ``b``).  ``ball`` is the radius-``L`` ball of
the ``(b+1)``-regular tree: the centre has ``b+1`` children, every other
non-leaf ``b``.  Nothing is materialized unless an engine asks for the
adjacency matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from ..errors import DomainError, ResourceError

GEOMETRIES = ("rooted", "ball")
BOUNDARIES = ("frozen", "occupied")
MAX_MATERIALIZED = 4_000_000
MAX_VERTEX_ID = 2**62


@dataclass(frozen=True)
class TreeConfig:
    """Finite tree geometry plus the rule applied to its leaves.

    ``boundary="frozen"``: leaves keep their initial state forever.
    ``boundary="occupied"``: leaves are occupied at time 0.
    """

    geometry: str
    L: int
    b: int
    boundary: str = "frozen"

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise DomainError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if self.boundary not in BOUNDARIES:
            raise DomainError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if int(self.L) != self.L or self.L < 1:
            raise DomainError(f"L must be an integer >= 1, got {self.L!r}")
        if int(self.b) != self.b or self.b < 1:
            raise DomainError(f"b must be a positive integer, got {self.b!r}")
        if self.geometry == "rooted" and self.b < 2:
            raise DomainError("rooted geometry needs b >= 2")
        if self.n_vertices > MAX_VERTEX_ID:
            raise ResourceError(f"{self.n_vertices} vertices overflow 64-bit vertex ids")

    @cached_property
    def cpv(self) -> tuple:
        """Children per vertex on each level ``0..L`` (0 on the leaf level)."""
        top = self.b + 1 if self.geometry == "ball" else self.b
        return (top,) + (self.b,) * (self.L - 1) + (0,)

    @cached_property
    def level_sizes(self) -> tuple:
        sizes = [1]
        for k in range(self.L):
            sizes.append(sizes[-1] * self.cpv[k])
        return tuple(sizes)

    @cached_property
    def offsets(self) -> tuple:
        off = [0]
        for s in self.level_sizes:
            off.append(off[-1] + s)
        return tuple(off)

    @property
    def n_vertices(self) -> int:
        return self.offsets[-1]

    @property
    def max_degree(self) -> int:
        return self.b + 1

    def level_of(self, v) -> np.ndarray:
        return np.searchsorted(np.asarray(self.offsets, dtype=np.int64), v, side="right") - 1

    def level_of_int(self, v: int) -> int:
        for k in range(self.L + 1):
            if v < self.offsets[k + 1]:
                return k
        raise DomainError(f"vertex {v} is not in the tree")

    def parent_int(self, v: int, k: int) -> int:
        return -1 if k == 0 else self.offsets[k - 1] + (v - self.offsets[k]) // self.cpv[k - 1]

    def neighbours_int(self, v: int, k: int) -> list[int]:
        c = self.cpv[k]
        first = self.offsets[k + 1] + (v - self.offsets[k]) * c if c else 0
        out = list(range(first, first + c))
        if k:
            out.insert(0, self.parent_int(v, k))
        return out

    def neighbour_matrix(self, v: np.ndarray, lvl: np.ndarray) -> np.ndarray:
        """``(n, b+1)`` neighbour ids, parent first, padded with ``-1``."""
        v = np.asarray(v, dtype=np.int64)
        lvl = np.asarray(lvl, dtype=np.int64)
        off = np.asarray(self.offsets, dtype=np.int64)
        cpv = np.asarray(self.cpv, dtype=np.int64)
        out = np.full((v.size, self.max_degree), -1, dtype=np.int64)
        has_parent = lvl > 0
        km = np.maximum(lvl - 1, 0)
        out[:, 0] = np.where(has_parent, off[km] + (v - off[lvl]) // np.maximum(cpv[km], 1), -1)
        c = cpv[lvl]
        first = off[np.minimum(lvl + 1, self.L + 1)] + (v - off[lvl]) * c
        for j in range(self.max_degree):
            ok = j < c
            col = np.where(has_parent, j + 1, j)
            fits = ok & (col < self.max_degree)
            rows = np.nonzero(fits)[0]
            out[rows, col[rows]] = first[rows] + j
        return out

    def degree(self, lvl) -> np.ndarray:
        lvl = np.asarray(lvl)
        return np.asarray(self.cpv)[lvl] + (lvl > 0)

    def distance_to_boundary(self, v) -> np.ndarray:
        return self.L - self.level_of(v)

    def interior(self, horizon: float) -> np.ndarray:
        """Vertices whose distance to the leaf level is at least ``horizon``."""
        top = self.L - int(np.ceil(horizon))
        if top < 0:
            return np.zeros(0, dtype=np.int64)
        return np.arange(self.offsets[top + 1], dtype=np.int64)

    def adjacency(self, limit: int = MAX_MATERIALIZED) -> sparse.csr_matrix:
        """Symmetric 0/1 adjacency matrix of the whole tree."""
        n = self.n_vertices
        if n > limit:
            raise ResourceError(
                f"tree has {n} vertices, above the materialization limit of {limit}"
            )
        child = np.arange(1, n, dtype=np.int64)
        par = self.parents(child)
        rows = np.concatenate([par, child])
        cols = np.concatenate([child, par])
        data = np.ones(rows.size, dtype=np.float32)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    def parents(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.int64)
        lvl = self.level_of(v)
        off = np.asarray(self.offsets, dtype=np.int64)
        cpv = np.asarray(self.cpv, dtype=np.int64)
        km = np.maximum(lvl - 1, 0)
        return np.where(lvl > 0, off[km] + (v - off[lvl]) // np.maximum(cpv[km], 1), -1)

    def is_leaf(self, v) -> np.ndarray:
        return self.level_of(v) == self.L
