"""Binomial upper tails and their derivatives in the success probability.

``bin_tail(b, q, theta)`` is the probability that a sum of ``b`` independent
Bernoulli(q) variables is at least ``theta``.  It is evaluated by direct
summation with a term recurrence, which is exact to a few ulps for the
trial counts used here (``b <= 64``).
"""

from __future__ import annotations

from math import comb

from .errors import DomainError

MAX_TRIALS = 64


def _check(b: int, q: float) -> None:
    if b < 1:
        raise DomainError(f"number of trials must be >= 1, got b={b}")
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"success probability must lie in [0, 1], got q={q!r}")


def bin_tail(b: int, q: float, theta: int) -> float:
    """Return P(X >= theta) for X ~ Binomial(b, q).

    For ``q <= 1/2`` the terms ``k = theta..b`` are accumulated upward with
    ``t[k+1] = t[k] * (b-k)/(k+1) * q/(1-q)``.  For ``q > 1/2`` the same
    recurrence runs on the mirrored variable ``b - X ~ Binomial(b, 1-q)``,
    so that no power of a tiny ``1-q`` has to be formed first.
    """
    _check(b, q)
    if theta <= 0:
        return 1.0
    if theta > b:
        return 0.0
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0

    if q <= 0.5:
        ratio = q / (1.0 - q)
        term = comb(b, theta) * q**theta * (1.0 - q) ** (b - theta)
        total = 0.0
        for k in range(theta, b + 1):
            total += term
            term *= (b - k) / (k + 1) * ratio
        return min(total, 1.0)

    # P(X >= theta) = P(Y <= b - theta), Y = b - X ~ Binomial(b, r)
    r = 1.0 - q
    ratio = r / q
    term = q**b
    total = 0.0
    for j in range(0, b - theta + 1):
        total += term
        term *= (b - j) / (j + 1) * ratio
    return min(total, 1.0)


def _check_derivative(b: int, q: float, theta: int) -> None:
    _check(b, q)
    if not 1 <= theta <= b:
        raise DomainError(
            f"tail derivative needs 1 <= theta <= b, got theta={theta}, b={b}"
        )


def bin_tail_dq(b: int, q: float, theta: int) -> float:
    """d/dq of :func:`bin_tail`: ``b C(b-1, theta-1) q^(theta-1) (1-q)^(b-theta)``."""
    _check_derivative(b, q, theta)
    return b * comb(b - 1, theta - 1) * q ** (theta - 1) * (1.0 - q) ** (b - theta)


def bin_tail_d2q(b: int, q: float, theta: int) -> float:
    """Second derivative of :func:`bin_tail` in ``q``.

    The two terms of the product rule are dropped when their integer
    prefactor vanishes, which gives the correct one-sided limits at
    ``q = 0`` (``theta = 1``) and ``q = 1`` (``theta = b``).
    """
    _check_derivative(b, q, theta)
    k = b * comb(b - 1, theta - 1)
    up = (theta - 1) * q ** (theta - 2) * (1.0 - q) ** (b - theta) if theta > 1 else 0.0
    down = (b - theta) * q ** (theta - 1) * (1.0 - q) ** (b - theta - 1) if theta < b else 0.0
    return k * (up - down)


def tail_dq_taylor(b: int, theta: int, center: float) -> list[float]:
    """Taylor coefficients of ``x -> bin_tail_dq(b, center + x, theta)``.

    The derivative is the polynomial ``K (c + x)^(theta-1) (1 - c - x)^(b-theta)``;
    both factors are expanded binomially around ``c`` and convolved, so the
    coefficients carry no cancellation from a monomial-basis detour.
    """
    _check_derivative(b, center, theta)
    k = b * comb(b - 1, theta - 1)
    m, n = theta - 1, b - theta
    left = [comb(m, i) * center ** (m - i) for i in range(m + 1)]
    right = [comb(n, j) * (1.0 - center) ** (n - j) * (-1.0) ** j for j in range(n + 1)]
    out = [0.0] * (m + n + 1)
    for i, a in enumerate(left):
        for j, c in enumerate(right):
            out[i + j] += a * c
    return [k * c for c in out]
