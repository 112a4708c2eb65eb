"""The drift ``W_p(q) = p + (1-p) Bin(b, q, theta) - q`` and its critical structure.

For ``b > theta >= 2`` the drift is convex below the inflection point
``q_tilde`` and concave above it.  Below the spinodal density ``p_tilde`` it
has an interior local minimum ``q_min(p)``; the critical density ``p_T`` is the
unique ``p`` at which that minimum touches zero, and ``q_T = q_min(p_T)`` is
the resulting double root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .binom import bin_tail, bin_tail_d2q, bin_tail_dq, tail_dq_taylor
from .errors import DegenerateParamsError, DomainError, NumericalError, StructureError

MAX_BISECTIONS = 200
P_BRACKET_EPS = 1e-9
SCAN_STEP = 1e-3


@dataclass(frozen=True)
class ModelParams:
    """Forward branching number ``b`` (tree degree ``b+1``) and threshold ``theta``."""

    b: int
    theta: int

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise DomainError(f"b must be a positive integer, got {self.b!r}")
        if int(self.theta) != self.theta or self.theta < 1:
            raise DomainError(f"theta must be a positive integer, got {self.theta!r}")

    @property
    def degenerate(self) -> bool:
        """True unless ``b > theta >= 2``."""
        return not (self.b > self.theta >= 2)

    def require_critical_structure(self) -> None:
        if self.degenerate:
            raise DegenerateParamsError(
                f"(b={self.b}, theta={self.theta}) is degenerate: the critical "
                "structure needs b > theta >= 2"
            )


def _check_prob(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")


def bisect(f: Callable[[float], float], lo: float, hi: float,
           maxiter: int = MAX_BISECTIONS) -> float:
    """Bisection on a sign change of ``f`` over ``[lo, hi]``.

    Runs until the midpoint coincides with an endpoint in floating point
    (or ``f`` hits zero exactly), never more than ``maxiter`` halvings.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise StructureError(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    # the endpoint with the smaller residual
    return lo if abs(flo) <= abs(f(hi)) else hi


def w(params: ModelParams, p: float, q: float) -> float:
    _check_prob("p", p)
    _check_prob("q", q)
    return p + (1.0 - p) * bin_tail(params.b, q, params.theta) - q


def w_dq(params: ModelParams, p: float, q: float) -> float:
    _check_prob("p", p)
    _check_prob("q", q)
    if not 1 <= params.theta <= params.b:
        return -1.0
    return (1.0 - p) * bin_tail_dq(params.b, q, params.theta) - 1.0


def w_d2q(params: ModelParams, p: float, q: float) -> float:
    _check_prob("p", p)
    _check_prob("q", q)
    if not 1 <= params.theta <= params.b:
        return 0.0
    return (1.0 - p) * bin_tail_d2q(params.b, q, params.theta)


def q_tilde(params: ModelParams) -> float:
    """Inflection point ``(theta-1)/(b-1)``, the maximiser of the tail derivative."""
    params.require_critical_structure()
    return (params.theta - 1) / (params.b - 1)


def p_tilde(params: ModelParams) -> float:
    """Spinodal density ``1 - 1/a`` with ``a`` the tail slope at ``q_tilde``."""
    a = bin_tail_dq(params.b, q_tilde(params), params.theta)
    if a <= 1.0:
        raise StructureError(
            f"no spinodal for (b={params.b}, theta={params.theta}): "
            f"maximal tail slope {a!r} <= 1"
        )
    return 1.0 - 1.0 / a


def q_min(params: ModelParams, p: float) -> float | None:
    """Interior local minimum of ``q -> W_p(q)``, or ``None`` when ``p >= p_tilde``."""
    _check_prob("p", p)
    if p >= 1.0:
        return None
    qt = q_tilde(params)
    if w_dq(params, p, qt) <= 0.0:
        return None
    return bisect(lambda q: w_dq(params, p, q), 0.0, qt)


def _min_value(params: ModelParams, p: float) -> float:
    return w(params, p, q_min(params, p))


@dataclass(frozen=True)
class Landscape:
    """Critical structure of the drift for fixed ``(b, theta)``.

    ``alpha`` is the prefactor of the metastable time scale
    ``t(h) = alpha h^(-1/2) + O(1)`` for initial density ``p_T + h``.
    """

    params: ModelParams
    q_tilde: float
    p_tilde: float
    p_T: float
    q_T: float
    alpha: float
    tolerances: dict = field(default_factory=dict)

    @property
    def curvature(self) -> float:
        """``a_2 = W''_{p_T}(q_T) / 2``."""
        return 0.5 * w_d2q(self.params, self.p_T, self.q_T)

    @property
    def beta(self) -> float:
        """Prefactor of the bottleneck divergence ``beta theta^(-1/2)``."""
        return math.pi / math.sqrt(self.curvature * (1.0 - self.q_T))

    def w(self, p: float, q: float) -> float:
        return w(self.params, p, q)

    def taylor(self) -> list[float]:
        """Coefficients ``c_k`` of ``W_{p_T}(q_T + x) = sum_k c_k x^k``.

        ``c_0`` and ``c_1`` are set to exactly zero: the double root is
        imposed rather than inherited from rounding in ``p_T``.
        """
        dcoef = tail_dq_taylor(self.params.b, self.params.theta, self.q_T)
        coef = [0.0, 0.0]
        for k, c in enumerate(dcoef[1:], start=1):
            coef.append((1.0 - self.p_T) * c / (k + 1))
        return coef

    def taylor_at_one(self) -> list[float]:
        """Coefficients ``e_k`` of ``W_{p_T}(1 - u) = sum_k e_k u^k``, with ``e_0 = 0``.

        Lets the approach to the absorbing state be evaluated without
        forming ``1 - u`` for tiny ``u``.
        """
        dcoef = tail_dq_taylor(self.params.b, self.params.theta, 1.0)
        out = [0.0]
        for j, d in enumerate(dcoef):
            c = ((1.0 - self.p_T) * d - (1.0 if j == 0 else 0.0)) / (j + 1)
            out.append(c if j % 2 else -c)
        return out

    def w_critical(self, s: float, coef: list[float] | None = None) -> float:
        """``W_{p_T}(s)`` with the double root at ``q_T`` built in exactly."""
        coef = self.taylor() if coef is None else coef
        x = s - self.q_T
        acc = 0.0
        for c in reversed(coef):
            acc = acc * x + c
        return acc


def critical(params: ModelParams, tol: float = 1e-10) -> Landscape:
    """Locate ``(p_T, q_T)`` and assemble the full :class:`Landscape`.

    ``p -> W_p(q_min(p))`` is strictly increasing, so ``p_T`` is found by
    bisection on its sign change over ``[eps, p_tilde - eps]``.
    """
    params.require_critical_structure()
    qt = q_tilde(params)
    pt = p_tilde(params)
    lo, hi = P_BRACKET_EPS, pt - P_BRACKET_EPS
    if not (_min_value(params, lo) < 0.0 < _min_value(params, hi)):
        raise StructureError(f"critical density not bracketed in [{lo}, {hi}]")
    p_T = bisect(lambda p: _min_value(params, p), lo, hi)
    q_T = q_min(params, p_T)

    res_w = abs(w(params, p_T, q_T))
    res_dw = abs(w_dq(params, p_T, q_T))
    d2 = w_d2q(params, p_T, q_T)
    if res_w > tol or res_dw > tol:
        raise NumericalError(
            f"critical pair residuals |W|={res_w:.3g}, |W'|={res_dw:.3g} exceed tol={tol}"
        )
    if not d2 > 0.0:
        raise NumericalError(f"W'' at the critical pair is not positive: {d2!r}")
    alpha = math.pi / math.sqrt(0.5 * d2) * math.sqrt((1.0 - p_T) / (1.0 - q_T))
    return Landscape(
        params=params,
        q_tilde=qt,
        p_tilde=pt,
        p_T=p_T,
        q_T=q_T,
        alpha=alpha,
        tolerances={"tol": tol, "residual_w": res_w, "residual_dw": res_dw, "w_d2q": d2},
    )


def _smallest_root_scan(params: ModelParams, p: float) -> float:
    f = lambda q: w(params, p, q)
    q = p
    while q < 1.0:
        nxt = min(q + SCAN_STEP, 1.0)
        if nxt >= 1.0:
            return 1.0
        if f(nxt) <= 0.0:
            return bisect(f, q, nxt)
        q = nxt
    return 1.0


def terminal_density(params: ModelParams, p: float) -> float:
    """Limit of the root occupation probability as ``t -> infinity``.

    For ``b > theta >= 2`` the drift is strictly decreasing on
    ``[0, q_min(p)]``, so the smallest positive root, when it exists, is
    bracketed by ``[p, q_min(p)]``.  Other parameters fall back to a
    forward scan in steps of ``1e-3``.
    """
    _check_prob("p", p)
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    if params.degenerate:
        return _smallest_root_scan(params, p)
    qm = q_min(params, p)
    if qm is None:
        return 1.0
    g = w(params, p, qm)
    if g > 0.0:
        return 1.0
    if g == 0.0:
        return qm
    return bisect(lambda q: w(params, p, q), p, qm)
