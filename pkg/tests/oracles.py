"""Independent reference computations used by the tests.

Nothing here imports the package's numerical routines: each oracle is a
brute-force or closed-form re-derivation.
"""

from __future__ import annotations

import math
from math import comb

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import fsolve


def tail_sum(b: int, q: float, theta: int) -> float:
    """Naive summation of the binomial upper tail."""
    return sum(comb(b, k) * q**k * (1 - q) ** (b - k) for k in range(max(theta, 0), b + 1))


def tail_poly(b: int, theta: int) -> Polynomial:
    """The tail as a polynomial in q, built from monomials."""
    one_minus = Polynomial([1.0, -1.0])
    x = Polynomial([0.0, 1.0])
    out = Polynomial([0.0])
    for k in range(theta, b + 1):
        out = out + comb(b, k) * x**k * one_minus ** (b - k)
    return out


def drift_poly(b: int, theta: int, p: float) -> Polynomial:
    return Polynomial([p, -1.0]) + (1 - p) * tail_poly(b, theta)


def critical_grid(b: int, theta: int, n_p: int = 400, n_q: int = 2000) -> tuple[float, float]:
    """Critical pair by a dense (p, q) grid scan and Newton refinement of ``W = W' = 0``."""
    q = np.linspace(1e-4, (theta - 1) / (b - 1), n_q)
    tail = tail_poly(b, theta)(q)
    prev = None
    for p in np.linspace(1e-4, 0.999, n_p):
        wq = p + (1 - p) * tail - q
        if wq.min() > 0:
            break
        prev = p, q[np.argmin(wq)]
    p0, q0 = prev

    def eqs(x):
        pol = drift_poly(b, theta, x[0])
        return [pol(x[1]), pol.deriv()(x[1])]

    p_T, q_T = fsolve(eqs, [p0, q0], xtol=1e-13)
    return float(p_T), float(q_T)


def rk4(f, y0: float, t_end: float, dt: float) -> float:
    """Fixed-step classical Runge-Kutta for a scalar ODE."""
    n = int(round(t_end / dt))
    y = y0
    t = 0.0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt * k1 / 2)
        k3 = f(t + dt / 2, y + dt * k2 / 2)
        k4 = f(t + dt, y + dt * k3)
        y += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        t += dt
    return y


def quadratic_window(delta: float, theta: float) -> float:
    """Closed form of ``int_{-delta}^{delta} dx / (x^2 + theta (1 - x))``."""
    s = math.sqrt(4 * theta - theta**2)
    return 2 / s * (math.atan((2 * delta - theta) / s) - math.atan((-2 * delta - theta) / s))


def binomial_se(prob: float, n: int) -> float:
    return math.sqrt(prob * (1 - prob) / n)
