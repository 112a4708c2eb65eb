"""Cutoff asymptotics for initial densities just above ``p_T``.

With ``p_h = p_T + h`` the occupation probability lingers near ``q_T`` for a
time ``alpha h^(-1/2)`` and then jumps to one inside a window of order one.
This module computes the jump profile ``phi``, the window offsets
``t_h(q) - alpha h^(-1/2)``, the compensated bottleneck integral and the
inner ``tan`` profile of the plateau.

Near-critical quantities are evaluated in the critical frame
``W_{p_h}(s) = (1-p_h)/(1-p_T) * (W_{p_T}(s) + theta_h (1-s))`` with
``theta_h = h/(1-p_h)``, and ``W_{p_T}`` expanded around ``q_T`` with the
double root imposed exactly.  Direct evaluation of ``W_{p_h}`` near the
bottleneck cancels down to absolute rounding of ~1e-17, which is no longer
negligible against ``h`` once ``h < 1e-7``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, least_squares

from .dynamics import BOTTLENECK_HALF_WIDTH, _plain_integral, lorentz_window_integral, ode_trace
from .errors import DomainError, NumericalError
from .landscape import Landscape

PROFILE_TOL = 1e-12


@dataclass(frozen=True)
class CutoffProfile:
    """Samples of the heteroclinic ``phi' = W_{p_T}(phi)`` from ``q_T`` to 1."""

    landscape: Landscape
    anchor: float
    r: np.ndarray
    phi: np.ndarray
    shift_convention: str = "phi(0) = (q_T+1)/2"
    _forward: object = field(default=None, repr=False, compare=False)
    _backward: object = field(default=None, repr=False, compare=False)

    @property
    def r_range(self) -> tuple[float, float]:
        return float(self.r[0]), float(self.r[-1])

    def __call__(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        lo, hi = self.r_range
        if r.size and (r.min() < lo or r.max() > hi):
            raise DomainError(f"profile sampled on [{lo}, {hi}] only")
        out = np.empty_like(r)
        pos = r >= 0
        if pos.any():
            out[pos] = 1.0 - self._forward(r[pos])[0]
        if (~pos).any():
            out[~pos] = self._backward(r[~pos])[0]
        out[r == 0] = self.anchor
        return out

    def one_minus(self, r) -> np.ndarray:
        """``1 - phi(r)`` without cancellation on the forward side."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = 1.0 - self(r)
        pos = r >= 0
        if pos.any():
            out[pos] = self._forward(r[pos])[0]
        return out


def profile_phi(landscape: Landscape, r_grid, anchor: float | None = None) -> CutoffProfile:
    """Integrate ``phi' = W_{p_T}(phi)`` both ways from ``phi(0) = anchor``.

    ``anchor`` defaults to the midpoint ``(q_T+1)/2``; the solution is unique
    only up to a shift, and the anchor pins that shift.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or r_grid.size == 0:
        raise DomainError("r_grid must be a non-empty 1-D array")
    q_T = landscape.q_T
    convention = "phi(0) = (q_T+1)/2"
    if anchor is None:
        anchor = 0.5 * (q_T + 1.0)
    else:
        convention = f"phi(0) = {anchor!r}"
    if not q_T < anchor < 1.0:
        raise DomainError(f"anchor must lie in (q_T, 1) = ({q_T}, 1), got {anchor!r}")

    coef = landscape.taylor()
    top = landscape.taylor_at_one()
    rhs = lambda _r, y: [landscape.w_critical(y[0], coef)]

    def rhs_top(_r, y):
        # u = 1 - phi, so the exponential approach to 1 keeps full relative accuracy
        u = y[0]
        acc = 0.0
        for c in reversed(top):
            acc = acc * u + c
        return [-acc]

    r_lo = min(float(r_grid.min()), 0.0)
    r_hi = max(float(r_grid.max()), 0.0)
    kw = dict(method="DOP853", rtol=PROFILE_TOL, atol=PROFILE_TOL, dense_output=True)
    u0 = 1.0 - anchor
    fwd = solve_ivp(rhs_top, (0.0, r_hi if r_hi > 0 else 1.0), [u0], method="DOP853",
                    rtol=PROFILE_TOL, atol=1e-300, dense_output=True)
    bwd = solve_ivp(rhs, (0.0, r_lo if r_lo < 0 else -1.0), [anchor], **kw)
    if not (fwd.success and bwd.success):
        raise NumericalError("profile integration failed")

    r = np.sort(r_grid)
    phi = np.empty_like(r)
    pos = r >= 0
    phi[pos] = 1.0 - fwd.sol(r[pos])[0]
    phi[~pos] = bwd.sol(r[~pos])[0]
    phi[r == 0] = anchor
    return CutoffProfile(landscape=landscape, anchor=anchor, r=r, phi=phi,
                         shift_convention=convention, _forward=fwd.sol, _backward=bwd.sol)


def phi_inverse(profile: CutoffProfile, q: float) -> float:
    """The ``r`` with ``phi(r) = q``, by root-finding on the dense profile."""
    q_T = profile.landscape.q_T
    if not q_T < q < 1.0:
        raise DomainError(f"q must lie in (q_T, 1) = ({q_T}, 1), got {q!r}")
    lo, hi = profile.r_range
    f_lo = float(profile(lo)[0]) - q
    f_hi = float(profile(hi)[0]) - q
    if f_lo > 0 or f_hi < 0:
        raise DomainError(f"q={q!r} lies outside the sampled profile range")
    if q == profile.anchor:
        return 0.0
    return brentq(lambda r: float(profile(r)[0]) - q, lo, hi, xtol=1e-15, rtol=1e-15,
                  maxiter=500)


def _window(landscape: Landscape, theta: float) -> tuple[float, float]:
    """Centre and width of the Lorentzian core of ``1/(W_{p_T} + theta (1-s))``."""
    return landscape.q_T, math.sqrt(theta * (1.0 - landscape.q_T) / landscape.curvature)


def hitting_time_critical_frame(landscape: Landscape, q: float, h: float,
                                delta: float = BOTTLENECK_HALF_WIDTH) -> float:
    """``t_h(q) = int_{p_h}^q ds / W_{p_h}(s)`` evaluated in the critical frame."""
    if not h > 0:
        raise DomainError(f"h must be positive, got {h!r}")
    p_T, q_T = landscape.p_T, landscape.q_T
    if not h < 1.0 - p_T:
        raise DomainError(f"h must be below 1 - p_T = {1.0 - p_T}, got {h!r}")
    if not q_T < q < 1.0:
        raise DomainError(f"q must lie in (q_T, 1) = ({q_T}, 1), got {q!r}")
    p_h = p_T + h
    if q <= p_h:
        raise DomainError(f"q={q!r} does not exceed the initial density p_h={p_h!r}")
    theta_h = h / (1.0 - p_h)
    coef = landscape.taylor()

    def direct(s):
        return landscape.w(p_T, s) + theta_h * (1.0 - s)

    def framed(s):
        return landscape.w_critical(s, coef) + theta_h * (1.0 - s)

    lo = max(p_h, q_T - delta)
    hi = min(q, q_T + delta)
    centre, width = _window(landscape, theta_h)
    total = _plain_integral(direct, p_h, lo)
    total += lorentz_window_integral(framed, centre, width, lo, hi)
    total += _plain_integral(direct, hi, q)
    return (1.0 - p_T) / (1.0 - p_h) * total


def window_offset(landscape: Landscape, q: float, h: float,
                  delta: float = BOTTLENECK_HALF_WIDTH) -> float:
    """``t_h(q) - alpha h^(-1/2)``; converges to ``phi^{-1}(q)`` up to a shift as ``h -> 0``."""
    return hitting_time_critical_frame(landscape, q, h, delta) - landscape.alpha / math.sqrt(h)


@dataclass(frozen=True)
class WindowScan:
    landscape: Landscape
    q_probe: float
    h_values: list
    offsets: list

    @property
    def gaps(self) -> list:
        return [abs(b - a) for a, b in zip(self.offsets, self.offsets[1:])]


def window_scan(landscape: Landscape, q: float, h_values) -> WindowScan:
    h_values = [float(h) for h in h_values]
    offsets = [window_offset(landscape, q, h) for h in h_values]
    return WindowScan(landscape=landscape, q_probe=q, h_values=h_values, offsets=offsets)


@dataclass(frozen=True)
class BottleneckValue:
    theta: float
    raw: float
    compensated: float
    beta: float


def compensated_integral(wfun, q: float, curvature: float, delta: float,
                         theta: float) -> BottleneckValue:
    """``int_{q-delta}^{q+delta} dx / (w(x) + theta (1-x))`` minus ``beta theta^(-1/2)``.

    ``w`` must have a double root at ``q`` with ``w''(q) = 2 * curvature``;
    ``beta = pi / sqrt(curvature (1-q))``.
    """
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta!r}")
    if not 0 < delta:
        raise DomainError(f"delta must be positive, got {delta!r}")
    width = math.sqrt(theta * (1.0 - q) / curvature)
    raw = lorentz_window_integral(lambda x: wfun(x) + theta * (1.0 - x), q, width,
                                  q - delta, q + delta)
    beta = math.pi / math.sqrt(curvature * (1.0 - q))
    return BottleneckValue(theta=theta, raw=raw, compensated=raw - beta / math.sqrt(theta),
                           beta=beta)


def bottleneck_integral(landscape: Landscape, delta: float, theta_small: float) -> BottleneckValue:
    """Compensated bottleneck integral of ``W_{p_T}`` around its double root ``q_T``."""
    q_T = landscape.q_T
    if not 0 < delta or q_T - delta < 0 or q_T + delta >= 1:
        raise DomainError(f"window [q_T-delta, q_T+delta] must sit inside (0, 1), delta={delta!r}")
    grid = np.linspace(q_T - delta, q_T + delta, 401)
    grid = grid[np.abs(grid - q_T) > 1e-3 * delta]
    if min(landscape.w(landscape.p_T, s) for s in grid) <= 0.0:
        raise DomainError(f"W_{{p_T}} vanishes inside the window for delta={delta!r}")
    coef = landscape.taylor()
    return compensated_integral(lambda s: landscape.w_critical(s, coef), q_T,
                                landscape.curvature, delta, theta_small)


def quadratic_self_test(delta: float, thetas) -> list[BottleneckValue]:
    """The control case ``w(x) = x^2`` at ``q = 0``; the limit is exactly ``-2/delta``."""
    return [compensated_integral(lambda x: x * x, 0.0, 1.0, delta, th) for th in thetas]


@dataclass(frozen=True)
class TanFitReport:
    """Least-squares fit of ``c1 tan(c2 lambda - c3)`` to the rescaled plateau."""

    h: float
    lambdas: np.ndarray
    lhs: np.ndarray
    c1: float
    c2: float
    c3: float
    relative_residual: float
    max_abs_residual: float
    success: bool
    lhs_increasing: bool
    candidates: dict
    message: str = ""


def tan_candidates(landscape: Landscape) -> dict:
    """Constants from the local quadratic approximation, kept as hypotheses to test."""
    a2 = landscape.curvature
    p_T, q_T = landscape.p_T, landscape.q_T
    return {
        "c1": math.sqrt((1.0 - q_T) / ((1.0 - p_T) * a2)),
        "c2": math.sqrt(a2 * (1.0 - q_T) / (1.0 - p_T)),
        "c3": math.pi / 2.0,
    }


def tan_profile_check(landscape: Landscape, h: float, lambdas=None,
                      tol: float = 1e-12) -> TanFitReport:
    """Fit ``h^(-1/2) [Q_{p_h}(lambda h^(-1/2)) - q_T]`` by ``c1 tan(c2 lambda - c3)``.

    The left side comes from an ODE trace at ``p_T + h``.  A failed fit is
    reported through ``success=False`` rather than raised.
    """
    if not h > 0:
        raise DomainError(f"h must be positive, got {h!r}")
    alpha = landscape.alpha
    if lambdas is None:
        lambdas = np.linspace(0.2 * alpha, 0.8 * alpha, 25)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.min() <= 0 or lambdas.max() >= alpha:
        raise DomainError(f"lambdas must lie inside (0, alpha) = (0, {alpha})")
    scale = 1.0 / math.sqrt(h)
    times = lambdas * scale
    traj = ode_trace(landscape.params, landscape.p_T + h, float(times.max()), tol=tol,
                     t_eval=times)
    Q, _ = traj.at(times)
    lhs = (Q - landscape.q_T) * scale
    cand = tan_candidates(landscape)

    def resid(c):
        return c[0] * np.tan(c[1] * lambdas - c[2]) - lhs

    x0 = np.array([cand["c1"], cand["c2"], cand["c3"]])
    try:
        fit = least_squares(resid, x0, x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=2000)
        c1, c2, c3 = (float(v) for v in fit.x)
        r = resid(fit.x)
        success, message = bool(fit.success), str(fit.message)
    except (ValueError, FloatingPointError) as exc:
        c1 = c2 = c3 = float("nan")
        r = np.full_like(lhs, np.nan)
        success, message = False, f"fit failed: {exc}"
    norm = float(np.linalg.norm(lhs))
    return TanFitReport(
        h=h, lambdas=lambdas, lhs=lhs, c1=c1, c2=c2, c3=c3,
        relative_residual=float(np.linalg.norm(r)) / norm if norm > 0 else float("nan"),
        max_abs_residual=float(np.max(np.abs(r))),
        success=success and bool(np.all(np.isfinite(r))),
        lhs_increasing=bool(np.all(np.diff(lhs) > 0)),
        candidates=cand, message=message,
    )
