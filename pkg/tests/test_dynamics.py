import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rk4, tail_sum
from treeboot import ModelParams, critical, terminal_density
from treeboot.dynamics import discrete_trace, hitting_time, ode_trace, p_convolution
from treeboot.errors import DomainError, UnreachableError
from treeboot.landscape import w

P32 = ModelParams(3, 2)
P_T = 1 / 9


def _valid(tr):
    assert tr.Q[0] == tr.P[0] == tr.p
    assert np.all(np.diff(tr.t) > 0)
    assert np.all(np.diff(tr.Q) >= -1e-12)
    assert np.all(np.diff(tr.P) >= -1e-12)
    assert np.all(tr.Q >= tr.p - 1e-12) and np.all(tr.Q <= 1 + 1e-12)
    assert np.all(tr.P >= tr.p - 1e-12) and np.all(tr.P <= 1 + 1e-12)


@pytest.mark.parametrize("p", [0.0, 0.05, 0.3, 1.0])
def test_discrete_trace_invariants(p):
    _valid(discrete_trace(P32, p, 30))


def test_discrete_fixed_points():
    assert np.all(discrete_trace(P32, 1.0, 10).Q == 1.0)
    assert np.all(discrete_trace(P32, 0.0, 10).Q == 0.0)


def test_discrete_one_step():
    tr = discrete_trace(P32, 0.3, 1)
    assert tr.Q[1] == pytest.approx(0.3 + 0.7 * 0.216, abs=1e-15)
    assert tr.P[1] == pytest.approx(0.3 + 0.7 * tail_sum(4, 0.3, 2), abs=1e-15)


def test_discrete_rejects_negative_steps():
    with pytest.raises(DomainError):
        discrete_trace(P32, 0.3, -1)


@pytest.mark.parametrize("p", [0.0, 0.05, 0.3, 1.0])
def test_ode_trace_invariants(p):
    _valid(ode_trace(P32, p, 20.0))


def test_ode_fixed_point():
    tr = ode_trace(P32, 1.0, 10.0)
    assert np.allclose(tr.Q, 1.0) and np.allclose(tr.P, 1.0)


@pytest.mark.parametrize("p", [0.05, 0.3, 0.6])
def test_ode_initial_slope(p):
    eps = 1e-5
    Q, _ = ode_trace(P32, p, 1.0, tol=1e-13, t_eval=[eps]).at(eps)
    assert (Q[0] - p) / eps == pytest.approx(w(P32, p, p), abs=1e-6)


def test_ode_against_rk4():
    p = 0.3
    f = lambda _t, y: p + (1 - p) * tail_sum(3, y, 2) - y
    ref = rk4(f, p, 2.0, 1e-4)
    Q, _ = ode_trace(P32, p, 2.0, t_eval=[2.0]).at(2.0)
    assert abs(Q[0] - ref) < 1e-8


def test_p_column_against_rk4_system():
    p = 0.3

    def step(y, dt):
        def f(v):
            q, P = v
            return np.array([p + (1 - p) * tail_sum(3, q, 2) - q,
                             (1 - p) * tail_sum(4, q, 2) - (P - p)])
        k1 = f(y)
        k2 = f(y + dt * k1 / 2)
        k3 = f(y + dt * k2 / 2)
        k4 = f(y + dt * k3)
        return y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6

    y = np.array([p, p])
    for _ in range(2000):
        y = step(y, 1e-3)
    _, P = ode_trace(P32, p, 2.0, t_eval=[2.0]).at(2.0)
    assert abs(P[0] - y[1]) < 1e-8


@pytest.mark.parametrize("p", [0.05, 0.3])
def test_p_column_against_convolution_quadrature(p):
    tr = ode_trace(P32, p, 8.0, tol=1e-12)
    for t in (0.5, 2.0, 5.0, 8.0):
        assert tr.at(t)[1][0] == pytest.approx(p_convolution(P32, tr, t), abs=1e-8)


@given(st.floats(0.0, 0.98), st.floats(0.0, 0.02))
@settings(max_examples=20, deadline=None)
def test_monotone_coupling_in_p(p1, dp):
    p2 = p1 + dp
    times = np.linspace(0, 15, 31)
    Q1, P1 = ode_trace(P32, p1, 15.0, t_eval=times).at(times)
    Q2, P2 = ode_trace(P32, p2, 15.0, t_eval=times).at(times)
    assert np.all(Q1 <= Q2 + 1e-9) and np.all(P1 <= P2 + 1e-9)
    d1, d2 = discrete_trace(P32, p1, 15), discrete_trace(P32, p2, 15)
    assert np.all(d1.Q <= d2.Q + 1e-15) and np.all(d1.P <= d2.P + 1e-15)


@pytest.mark.parametrize("p", [0.02, 0.05, 0.17, 0.3, 0.6])
def test_discrete_and_continuous_share_limit(p):
    d = discrete_trace(P32, p, 3000).Q[-1]
    c = ode_trace(P32, p, 3000.0).Q[-1]
    assert abs(d - c) < 1e-6


@pytest.mark.parametrize("p", [0.02, 0.06, 0.1])
def test_subcritical_convergence(p):
    tr = ode_trace(P32, p, 1e4)
    assert abs(tr.Q[-1] - terminal_density(P32, p)) < 1e-6


def test_hitting_time_examples():
    assert hitting_time(P32, 0.3, 0.3) == 0.0
    with pytest.raises(UnreachableError):
        hitting_time(P32, P_T - 0.01, 0.99)
    with pytest.raises(DomainError):
        hitting_time(P32, 0.3, 0.2)


def test_hitting_time_near_critical_matches_crossing():
    land = critical(P32)
    p = land.p_T + 1e-3
    t = hitting_time(P32, p, 0.9)
    tr = ode_trace(P32, p, t * 1.1, tol=1e-12)
    crossing = float(np.interp(0.9, tr.Q, tr.t))
    # refine the linear interpolation with the dense solution
    for _ in range(3):
        Q, _ = tr.at(crossing)
        crossing -= (Q[0] - 0.9) / w(P32, p, Q[0])
    assert crossing == pytest.approx(t, rel=1e-6)


@pytest.mark.parametrize("p", [0.05, 0.3, P_T + 1e-2])
def test_quadrature_ode_duality(p):
    limit = terminal_density(P32, p)
    top = min(limit, 1.0) - 1e-3
    targets = np.linspace(p + 1e-3, top, 8)
    times = [hitting_time(P32, p, q) for q in targets]
    tr = ode_trace(P32, p, max(times), tol=1e-12, t_eval=times)
    Q, _ = tr.at(times)
    assert np.max(np.abs(Q - targets)) < 1e-6
