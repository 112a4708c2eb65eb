from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import binomial_se
from treeboot import ModelParams, critical
from treeboot.dynamics import discrete_trace, ode_trace
from treeboot.errors import DomainError, ResourceError
from treeboot.simulator import (
    SimConfig,
    TreeConfig,
    connected_region,
    coupling_check,
    root_marginal_exact_discrete,
    simulate,
    simulate_continuous,
    simulate_discrete,
    window_statistics,
)
from treeboot.simulator.explore import deepening, dfs, explore
from treeboot.simulator.forward import events, sweep, whole_tree
from treeboot.simulator.seeding import (
    draw,
    exponential,
    exponential_int,
    replica_key_int,
    replica_keys,
    splitmix,
    uniform,
    uniform_int,
    vertex_key_int,
    vertex_keys,
)

P32 = ModelParams(3, 2)
U64 = st.integers(0, 2**64 - 1)


# seeding

def test_splitmix_reference_value():
    # first output of the reference SplitMix64 generator seeded with 0
    assert int(splitmix(0)) == 0xE220A8397B1DCDAF


@given(U64, st.integers(0, 10**6), st.integers(0, 10**9), st.integers(0, 40))
@settings(max_examples=200)
def test_scalar_and_array_paths_agree(seed, i, v, k):
    rk = replica_key_int(seed, i)
    assert rk == int(replica_keys(seed, np.array([i]))[0])
    vk = vertex_key_int(rk, v)
    assert vk == int(vertex_keys(np.uint64(rk), np.array([v]))[0])
    assert uniform_int(vk, k) == float(uniform(_draw(vk, k))[0])
    assert exponential_int(vk, k) == float(exponential(np.array([vk], dtype=np.uint64), k)[0])


def _draw(vk, k):
    return draw(np.array([vk], dtype=np.uint64), k)


def test_uniform_int_matches_array():
    vk = vertex_keys(replica_keys(7, 50), np.arange(50))
    for k in (0, 1, 5):
        arr = uniform(draw(vk, k))
        assert arr.tolist() == [uniform_int(int(x), k) for x in vk]
        assert np.all((arr >= 0) & (arr < 1))


def test_replica_keys_are_chunk_independent():
    whole = replica_keys(123, 1000)
    parts = np.concatenate([replica_keys(123, 250, start=s) for s in range(0, 1000, 250)])
    assert np.array_equal(whole, parts)
    assert np.unique(whole).size == 1000


def test_uniforms_look_uniform():
    u = uniform(draw(vertex_keys(replica_keys(1, 20000), 3), 0))
    assert stats.kstest(u, "uniform").pvalue > 1e-3


# geometry

@pytest.mark.parametrize("b,L", [(2, 1), (3, 4), (5, 3)])
def test_rooted_vertex_count(b, L):
    assert TreeConfig("rooted", L, b).n_vertices == (b ** (L + 1) - 1) // (b - 1)


@pytest.mark.parametrize("b,L", [(2, 3), (3, 4)])
def test_ball_structure(b, L):
    tree = TreeConfig("ball", L, b)
    adj = tree.adjacency()
    assert tree.n_vertices == 1 + (b + 1) * (b**L - 1) // (b - 1)
    assert (adj != adj.T).nnz == 0
    deg = np.asarray(adj.sum(axis=1)).ravel()
    leaf = tree.is_leaf(np.arange(tree.n_vertices))
    assert np.all(deg[~leaf] == b + 1) and np.all(deg[leaf] == 1)


@pytest.mark.parametrize("geometry", ["rooted", "ball"])
def test_neighbour_matrix_matches_adjacency(geometry):
    tree = TreeConfig(geometry, 4, 3)
    adj = tree.adjacency().tolil()
    v = np.arange(tree.n_vertices)
    nb = tree.neighbour_matrix(v, tree.level_of(v))
    for x in range(tree.n_vertices):
        mine = sorted(int(u) for u in nb[x] if u >= 0)
        assert mine == sorted(adj.rows[x])
        assert mine == sorted(tree.neighbours_int(x, tree.level_of_int(x)))


def test_tree_validation():
    with pytest.raises(DomainError):
        TreeConfig("star", 3, 3)
    with pytest.raises(DomainError):
        TreeConfig("ball", 0, 3)
    with pytest.raises(DomainError):
        TreeConfig("ball", 3, 3, boundary="open")
    with pytest.raises(ResourceError):
        TreeConfig("ball", 40, 3)
    with pytest.raises(ResourceError):
        TreeConfig("ball", 14, 3).adjacency()


# trivial regimes

def _cfg(geometry="ball", L=5, p=0.3, mode="continuous", horizon=4.0, **kw):
    return SimConfig(tree=TreeConfig(geometry, L, 3), params=kw.pop("params", P32), p=p,
                     mode=mode, horizon=horizon, **kw)


@pytest.mark.parametrize("mode,horizon", [("discrete", 6), ("continuous", 6.0)])
@pytest.mark.parametrize("engine", ["auto", "explore", "dfs"])
def test_full_and_empty_initial_states(mode, horizon, engine):
    full = simulate(_cfg(p=1.0, mode=mode, horizon=horizon, replicas=20, engine=engine))
    assert np.all(full.times.filled(np.inf) == 0)
    empty = simulate(_cfg(p=0.0, mode=mode, horizon=horizon, replicas=20, engine=engine))
    assert empty.times.mask.all()


@pytest.mark.parametrize("mode,horizon", [("discrete", 8), ("continuous", 8.0)])
def test_threshold_above_degree_freezes(mode, horizon):
    params = ModelParams(3, 5)
    res = simulate(_cfg(p=0.5, mode=mode, horizon=horizon, replicas=50, params=params,
                        tracked=tuple(range(40))))
    T = res.times.filled(np.inf)
    assert np.all((T == 0) | np.isinf(T))
    assert 0 < np.mean(T == 0) < 1


# engine equivalence

@pytest.mark.parametrize("theta", [1, 2, 3])
@pytest.mark.parametrize("geometry,boundary", [("ball", "frozen"), ("rooted", "frozen"),
                                               ("ball", "occupied")])
def test_discrete_engines_bit_identical(theta, geometry, boundary):
    tree = TreeConfig(geometry, 5, 3, boundary)
    rk = replica_keys(11, 60)
    ref = sweep(whole_tree(tree), theta, 0.25, rk, 7)[:, 0]
    assert np.array_equal(explore(tree, theta, 0.25, rk, 0, "discrete", 7), ref)
    assert np.array_equal(dfs(tree, theta, 0.25, rk, 0, "discrete", 7), ref)


@pytest.mark.parametrize("clock", ["eligibility", "rings"])
@pytest.mark.parametrize("theta", [2, 3])
@pytest.mark.parametrize("geometry,boundary", [("ball", "frozen"), ("rooted", "occupied")])
def test_continuous_engines_bit_identical(clock, theta, geometry, boundary):
    tree = TreeConfig(geometry, 5, 3, boundary)
    rk = replica_keys(5, 40)
    g = whole_tree(tree)
    ref = np.array([events(g, theta, 0.3, int(k), 6.0, clock)[0] for k in rk])
    assert np.array_equal(explore(tree, theta, 0.3, rk, 0, clock, 6.0), ref)
    assert np.array_equal(dfs(tree, theta, 0.3, rk, 0, clock, 6.0), ref)
    assert np.array_equal(deepening(explore, tree, theta, 0.3, rk, 0, clock, 6.0, start=0.5), ref)


def test_non_root_vertex_explore():
    tree = TreeConfig("ball", 5, 3)
    rk = replica_keys(9, 30)
    g = whole_tree(tree)
    v = 7
    ref = np.array([events(g, 2, 0.3, int(k), 5.0)[v] for k in rk])
    assert np.array_equal(explore(tree, 2, 0.3, rk, v, "eligibility", 5.0), ref)


def test_cone_limit_raises():
    tree = TreeConfig("ball", 12, 3)
    with pytest.raises(ResourceError):
        explore(tree, 2, 0.05, replica_keys(1, 200), 0, "discrete", 12, max_cone=10_000)


# laws

@pytest.mark.parametrize("clock", ["eligibility", "rings"])
def test_single_eligible_vertex_delay_is_exponential(clock):
    # leaves occupied at 0, centre vacant: T_centre - 0 ~ Exp(1)
    cfg = SimConfig(tree=TreeConfig("ball", 1, 3, "occupied"), params=P32, p=0.0,
                    mode="continuous", horizon=60.0, replicas=100_000, clock=clock,
                    engine="explore")
    T = simulate(cfg).times.filled(np.inf)[:, 0]
    assert np.all(np.isfinite(T))
    assert stats.kstest(T, "expon").pvalue > 1e-3


def test_root_marginal_examples():
    assert root_marginal_exact_discrete(P32, 0.3, 0, 5) == 0.3
    assert root_marginal_exact_discrete(P32, 0.3, 4, 0) == 0.3
    assert root_marginal_exact_discrete(P32, 0.3, 2, 1) == pytest.approx(0.4512, abs=1e-15)
    with pytest.raises(DomainError):
        root_marginal_exact_discrete(ModelParams(3, 1), 0.3, 2, 1)


@pytest.mark.parametrize("p", [0.05, 0.2, 0.3])
def test_light_cone_exactness(p):
    d = 9
    Q = discrete_trace(P32, p, d).Q
    for n in range(d + 1):
        assert root_marginal_exact_discrete(P32, p, d, n) == Q[n]
    # past the light cone the frozen leaves are felt
    assert root_marginal_exact_discrete(P32, 0.3, 3, 6) < discrete_trace(P32, 0.3, 6).Q[6]


def test_discrete_exactness_small():
    cfg = SimConfig(tree=TreeConfig("rooted", 6, 3), params=P32, p=0.3, mode="discrete",
                    horizon=6, replicas=4000, engine="sweep", tracked=(0,))
    res = simulate_discrete(cfg)
    for n in range(7):
        exact = root_marginal_exact_discrete(P32, 0.3, 6, n)
        assert abs(res.density[n] - exact) < 3 * binomial_se(exact, 4000) + 1e-12


def test_continuous_root_matches_ode_q():
    # the root of a deep rooted tree sees b children, so its law is Q
    cfg = SimConfig(tree=TreeConfig("rooted", 14, 3), params=P32, p=0.2, mode="continuous",
                    horizon=3.0, replicas=4000, engine="explore",
                    sample_times=(0.5, 1.0, 2.0, 3.0))
    res = simulate_continuous(cfg)
    Q, _ = ode_trace(P32, 0.2, 3.0, t_eval=res.t).at(res.t)
    assert np.all(np.abs(res.density - Q) < 3 * np.maximum(res.se, 1e-9))


def test_mode_mismatch():
    with pytest.raises(DomainError):
        simulate_discrete(_cfg(mode="continuous"))
    with pytest.raises(DomainError):
        simulate_continuous(_cfg(mode="discrete", horizon=4))


@pytest.mark.parametrize("kw", [
    dict(p=1.5), dict(mode="both"), dict(horizon=-1.0), dict(mode="discrete", horizon=2.5),
    dict(replicas=0), dict(seed=-1), dict(clock="discrete"), dict(engine="fast"),
    dict(mode="discrete", horizon=3, engine="events"), dict(engine="sweep"),
    dict(tracked=(10**9,)),
])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        _cfg(**kw)


def test_branching_mismatch():
    with pytest.raises(DomainError):
        SimConfig(tree=TreeConfig("ball", 3, 4), params=P32, p=0.2, mode="discrete", horizon=2)


def test_oversized_forward_engine():
    with pytest.raises(ResourceError):
        simulate(_cfg(L=14, engine="events", replicas=1))


# monotonicity

@pytest.mark.parametrize("mode,clock", [("discrete", "eligibility"), ("continuous", "eligibility"),
                                        ("continuous", "rings")])
def test_monotone_in_time_and_p(mode, clock):
    kw = dict(L=6, mode=mode, horizon=8 if mode == "discrete" else 8.0, replicas=40,
              clock=clock, tracked=tuple(range(100)))
    lo = simulate(_cfg(p=0.2, **kw))
    hi = simulate(_cfg(p=0.3, **kw))
    T_lo, T_hi = lo.times.filled(np.inf), hi.times.filled(np.inf)
    assert np.all(T_hi <= T_lo)
    for a, b in zip(lo.t, lo.t[1:]):
        assert np.all(lo.occupied_at(a) <= lo.occupied_at(b))
    assert np.all(np.diff(lo.density) >= 0)


def test_zero_times_are_initial_occupation():
    res = simulate(_cfg(p=0.3, L=4, replicas=30, tracked=tuple(range(50))))
    rk = replica_keys(res.config.seed, 30)
    u = uniform(draw(vertex_keys(rk[:, None], np.arange(50)[None, :]), 0))
    assert np.array_equal(res.times.filled(np.inf) == 0, u < 0.3)


def test_results_independent_of_workers(monkeypatch):
    cfg = _cfg(p=0.25, L=8, replicas=150, engine="explore")
    a = simulate(cfg).times.filled(np.inf)
    monkeypatch.setenv("TREEBOOT_WORKERS", "2")
    b = simulate(cfg).times.filled(np.inf)
    assert np.array_equal(a, b)


# coupling

@pytest.mark.parametrize("mode,horizon", [("continuous", 6.0), ("discrete", 8)])
def test_coupling_identity(mode, horizon):
    tree = TreeConfig("ball", 6, 3)
    cfg = SimConfig(tree=tree, params=P32, p=0.25, mode=mode, horizon=horizon, replicas=10)
    rep = coupling_check(cfg, connected_region(tree, 20))
    assert rep.identical and rep.mismatched_replicas == []
    assert len(rep.region) == 20 and len(rep.boundary) > 0


def test_coupling_trivial_at_full_density():
    tree = TreeConfig("ball", 4, 3)
    cfg = SimConfig(tree=tree, params=P32, p=1.0, mode="continuous", horizon=3.0, replicas=3)
    assert coupling_check(cfg, connected_region(tree, 5)).identical


def test_coupling_rejects_boundary_region():
    tree = TreeConfig("ball", 2, 3)
    cfg = SimConfig(tree=tree, params=P32, p=0.3, mode="discrete", horizon=3, replicas=2)
    with pytest.raises(DomainError):
        coupling_check(cfg, connected_region(tree, 10))
    with pytest.raises(DomainError):
        coupling_check(cfg, [1, 2])


# window statistics

@pytest.fixture(scope="module")
def window_cfg():
    land = critical(P32)
    tree = TreeConfig("ball", 12, 3)
    return land, SimConfig(tree=tree, params=P32, p=land.p_T + 0.1, mode="continuous",
                           horizon=6.0, replicas=1000, engine="explore")


def test_window_statistics_monotone_in_q(window_cfg):
    land, cfg = window_cfg
    a = window_statistics(cfg, 0.7, land)
    b = window_statistics(cfg, 0.8, land)
    assert b.t_h > a.t_h
    assert b.density >= a.density
    assert set(a.candidates) == {"tail", "shifted_tail", "exact_law"}
    assert a.r_h == pytest.approx(0.1 ** -0.25)
    assert "matches" in a.statement
    # pre-window curve follows the single-site law
    pre = [c for c in a.curve if 0 < c["t"] < a.t_h]
    assert pre and all(abs(c["z"]) < 3 for c in pre if c["se"] > 0)


def test_window_statistics_near_one():
    land = critical(P32)
    cfg = SimConfig(tree=TreeConfig("ball", 13, 3), params=P32, p=land.p_T + 0.1,
                    mode="continuous", horizon=10.0, replicas=300, engine="explore")
    rep = window_statistics(cfg, 0.99, land)
    assert rep.density > 0.97


def test_window_statistics_errors(window_cfg):
    land, cfg = window_cfg
    with pytest.raises(DomainError):
        window_statistics(cfg, 0.99, land)       # t_h beyond horizon
    with pytest.raises(DomainError):
        window_statistics(replace(cfg, p=land.p_T - 0.01), 0.7, land)
    with pytest.raises(DomainError):
        window_statistics(replace(cfg, mode="discrete", horizon=6), 0.7, land)
