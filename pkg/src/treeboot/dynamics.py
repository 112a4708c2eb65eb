"""Single-vertex occupation laws: discrete recursion, ODE system, hitting times.

``Q`` is the root occupation probability on the rooted tree with forward
branching ``b``; ``P`` is the occupation probability of a vertex of the full
``(b+1)``-regular tree.  In continuous time ``P`` is an exponential
convolution of ``Bin(b+1, Q, theta)``, which is carried as the second
component of a first-order system::

    dQ/dt = W_p(Q)
    dP/dt = (1-p) Bin(b+1, Q, theta) - (P - p)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp

from .binom import bin_tail
from .errors import DomainError, NumericalError, UnreachableError
from .landscape import ModelParams, q_min, terminal_density, w, w_d2q

BOTTLENECK_HALF_WIDTH = 0.05
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 500


@dataclass(frozen=True)
class Trajectory:
    """Time series ``(t, Q, P)`` for one initial density.

    ``dense`` holds the continuous interpolant in ``continuous`` mode; it maps
    an array of times to a ``(2, n)`` array of ``(Q, P)``.
    """

    p: float
    mode: str
    t: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    meta: dict = field(default_factory=dict)
    dense: object = field(default=None, repr=False, compare=False)

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.t.tolist(), self.Q.tolist(), self.P.tolist()))

    def at(self, times) -> tuple[np.ndarray, np.ndarray]:
        """``(Q, P)`` at arbitrary times; discrete mode floors to whole steps."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if self.mode == "discrete":
            idx = np.clip(np.floor(times).astype(int), 0, len(self.t) - 1)
            return self.Q[idx], self.P[idx]
        if self.dense is None:
            return np.interp(times, self.t, self.Q), np.interp(times, self.t, self.P)
        qp = self.dense(times)
        return qp[0], qp[1]


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"initial density must lie in [0, 1], got p={p!r}")


def discrete_trace(params: ModelParams, p: float, n_steps: int) -> Trajectory:
    """Iterate ``Q(n+1) = p + (1-p) Bin(b, Q(n), theta)`` and the matching ``P``.

    ``P(n) = p + (1-p) Bin(b+1, Q(n-1), theta)`` for ``n >= 1``.
    """
    _check_p(p)
    if n_steps < 0:
        raise DomainError(f"n_steps must be >= 0, got {n_steps}")
    b, th = params.b, params.theta
    Q = np.empty(n_steps + 1)
    P = np.empty(n_steps + 1)
    Q[0] = P[0] = p
    for n in range(n_steps):
        P[n + 1] = p + (1.0 - p) * bin_tail(b + 1, Q[n], th)
        Q[n + 1] = p + (1.0 - p) * bin_tail(b, Q[n], th)
    return Trajectory(p=p, mode="discrete", t=np.arange(n_steps + 1, dtype=float),
                      Q=Q, P=P, meta={"n_steps": n_steps})


def _rhs(params: ModelParams, p: float):
    b, th = params.b, params.theta

    def f(_t, y):
        q = min(max(y[0], 0.0), 1.0)
        return (
            p + (1.0 - p) * bin_tail(b, q, th) - q,
            (1.0 - p) * bin_tail(b + 1, q, th) - (y[1] - p),
        )

    return f


def ode_trace(params: ModelParams, p: float, t_max: float, tol: float = 1e-10,
              rtol: float | None = None, t_eval=None) -> Trajectory:
    """Integrate the ``(Q, P)`` system on ``[0, t_max]``.

    Uses the explicit Dormand-Prince 8(5,3) pair with absolute tolerance
    ``tol`` and relative tolerance ``rtol`` (defaults to ``tol``).  Samples
    are the integrator's own steps merged with any requested ``t_eval``.
    """
    _check_p(p)
    if t_max < 0:
        raise DomainError(f"t_max must be >= 0, got {t_max}")
    rtol = tol if rtol is None else rtol
    meta = {"atol": tol, "rtol": rtol, "method": "DOP853", "t_max": t_max}
    if t_max == 0:
        z = np.zeros(1)
        return Trajectory(p=p, mode="continuous", t=z, Q=z + p, P=z + p, meta=meta)

    sol = solve_ivp(_rhs(params, p), (0.0, float(t_max)), [p, p], method="DOP853",
                    rtol=rtol, atol=tol, dense_output=True)
    if not sol.success:
        raise NumericalError(f"ODE integration failed: {sol.message}")
    t = sol.t
    if t_eval is not None:
        extra = np.asarray(t_eval, dtype=float)
        if extra.size and (extra.min() < 0 or extra.max() > t_max):
            raise DomainError("t_eval must lie in [0, t_max]")
        t = np.union1d(t, extra)
    qp = sol.sol(t)
    qp[:, 0] = p
    meta["n_steps"] = len(sol.t) - 1
    meta["nfev"] = int(sol.nfev)
    return Trajectory(p=p, mode="continuous", t=t, Q=qp[0], P=qp[1], meta=meta,
                      dense=sol.sol)


def _quad(g, lo: float, hi: float, epsrel: float) -> float:
    # near-critical integrands sit at the rounding floor of W; QUADPACK flags
    # that as roundoff even when the result is converged
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _err = quad(g, lo, hi, epsabs=0.0, epsrel=epsrel, limit=QUAD_LIMIT)
    return val


def lorentz_window_integral(f, center: float, width: float, lo: float, hi: float,
                            epsrel: float = QUAD_EPSREL) -> float:
    """``int_lo^hi ds / f(s)`` for ``f`` close to ``c + a (s - center)^2``.

    The substitution ``s = center + width tan(u)`` with ``width = sqrt(c/a)``
    flattens the near-Lorentzian peak of ``1/f`` into an almost constant
    integrand on a bounded ``u`` interval.
    """
    if hi <= lo:
        return 0.0
    u_lo = math.atan((lo - center) / width)
    u_hi = math.atan((hi - center) / width)

    def g(u):
        t = math.tan(u)
        return width * (1.0 + t * t) / f(center + width * t)

    return _quad(g, u_lo, u_hi, epsrel)


def _plain_integral(f, lo: float, hi: float, epsrel: float = QUAD_EPSREL) -> float:
    if hi <= lo:
        return 0.0
    return _quad(lambda s: 1.0 / f(s), lo, hi, epsrel)


def hitting_time(params: ModelParams, p: float, q_target: float,
                 delta: float = BOTTLENECK_HALF_WIDTH) -> float:
    """Time at which ``Q_p`` reaches ``q_target``: ``int_p^q ds / W_p(s)``.

    When the local minimum ``q_min(p)`` of the drift lies inside the range,
    the window ``q_min +- delta`` is integrated with the tangent
    substitution of :func:`lorentz_window_integral`.
    """
    _check_p(p)
    if not 0.0 <= q_target <= 1.0:
        raise DomainError(f"q_target must lie in [0, 1], got {q_target!r}")
    if q_target < p:
        raise DomainError(f"q_target={q_target!r} lies below the initial density p={p!r}")
    if q_target == p:
        return 0.0
    limit = terminal_density(params, p)
    if q_target >= limit:
        raise UnreachableError(
            f"q_target={q_target!r} is never reached: Q_p(t) -> {limit!r} for p={p!r}"
        )
    f = lambda s: w(params, p, s)

    qm = None if params.degenerate else q_min(params, p)
    if qm is None or not p < qm < q_target:
        return _plain_integral(f, p, q_target)

    c = f(qm)
    a = 0.5 * w_d2q(params, p, qm)
    lo = max(p, qm - delta)
    hi = min(q_target, qm + delta)
    total = _plain_integral(f, p, lo)
    total += lorentz_window_integral(f, qm, math.sqrt(c / a), lo, hi)
    total += _plain_integral(f, hi, q_target)
    return total


def p_convolution(params: ModelParams, traj: Trajectory, t: float) -> float:
    """``P_p(t)`` straight from its defining exponential convolution.

    ``P(t) = p + (1-p) int_0^t e^{-(t-z)} Bin(b+1, Q(z), theta) dz`` with
    ``Q`` taken from ``traj``; independent of the ``P`` column of the ODE.
    """
    p = traj.p
    if t == 0:
        return p
    b, th = params.b, params.theta

    def g(z):
        qz = float(traj.at(z)[0][0])
        return math.exp(-(t - z)) * bin_tail(b + 1, min(max(qz, 0.0), 1.0), th)

    val, _ = quad(g, 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=QUAD_LIMIT)
    return p + (1.0 - p) * val
