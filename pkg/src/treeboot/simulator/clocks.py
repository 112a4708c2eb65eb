"""Activation rules: when does a vacant vertex that became eligible at ``S`` occupy?

``discrete``     ``T = S + 1`` (synchronous sweeps)
``eligibility``  ``T = S + E`` with ``E = Exp(1)`` drawn once per vertex (draw 1)
``rings``        ``T`` = first ring of the vertex's Poisson clock strictly after ``S``;
                 ring gaps are draws ``1, 2, ...``

Each rule also provides the *child budget*: given that only ``T <= B``
matters, the largest ``S`` that can still produce it.  ``-inf`` means no
``S`` can.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError
from .seeding import exponential, exponential_int

CLOCKS = ("discrete", "eligibility", "rings")
INF = math.inf


def check_clock(clock: str) -> None:
    if clock not in CLOCKS:
        raise DomainError(f"clock must be one of {CLOCKS}, got {clock!r}")


def _first_ring_after(vkeys: np.ndarray, S: np.ndarray) -> np.ndarray:
    out = np.full(S.shape, INF)
    t = np.zeros(S.shape)
    idx = np.nonzero(np.isfinite(S))[0]
    k = 1
    while idx.size:
        t[idx] += exponential(vkeys[idx], k)
        hit = t[idx] > S[idx]
        out[idx[hit]] = t[idx[hit]]
        idx = idx[~hit]
        k += 1
    return out


def _last_ring_before(vkeys: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.full(B.shape, -INF)
    t = np.zeros(B.shape)
    idx = np.nonzero(B >= 0)[0]
    k = 1
    while idx.size:
        t[idx] += exponential(vkeys[idx], k)
        inside = t[idx] <= B[idx]
        out[idx[inside]] = t[idx[inside]]
        idx = idx[inside]
        k += 1
    return out


def activation(clock: str, vkeys: np.ndarray, S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if clock == "discrete":
        return S + 1.0
    if clock == "eligibility":
        return S + exponential(vkeys, 1)
    return _first_ring_after(vkeys, S)


def child_budget(clock: str, vkeys: np.ndarray, B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if clock == "discrete":
        return B - 1.0
    if clock == "eligibility":
        return B - exponential(vkeys, 1)
    return _last_ring_before(vkeys, B)


def activation_int(clock: str, vkey: int, S: float) -> float:
    if S == INF:
        return INF
    if clock == "discrete":
        return S + 1.0
    if clock == "eligibility":
        return S + exponential_int(vkey, 1)
    t, k = 0.0, 1
    while True:
        t += exponential_int(vkey, k)
        if t > S:
            return t
        k += 1


def child_budget_int(clock: str, vkey: int, B: float) -> float:
    if clock == "discrete":
        return B - 1.0
    if clock == "eligibility":
        return B - exponential_int(vkey, 1)
    if B < 0:
        return -INF
    last, t, k = -INF, 0.0, 1
    while True:
        t += exponential_int(vkey, k)
        if t > B:
            return last
        last = t
        k += 1
