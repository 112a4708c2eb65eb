"""Simulation configs, results and the public simulation operations."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.csgraph import connected_components

from ..binom import bin_tail
from ..dynamics import ode_trace
from ..errors import DomainError, ResourceError
from ..landscape import Landscape, ModelParams, critical
from ..metastability import hitting_time_critical_frame
from .clocks import check_clock
from .explore import deepening, dfs, explore
from .forward import LocalGraph, events, induced, sweep, whole_tree
from .geometry import TreeConfig
from .seeding import replica_keys

MODES = ("discrete", "continuous")
ENGINES = ("auto", "sweep", "events", "explore", "dfs")
DEFAULT_SEED = 0x5EED_2024_0B00
AUTO_FORWARD_VERTICES = 20_000
CHUNK = {"sweep": 4096, "events": 64, "explore": 500, "dfs": 100}
WORKERS_ENV = "TREEBOOT_WORKERS"


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo experiment.

    ``horizon`` is the number of sweeps in ``discrete`` mode and ``t_max`` in
    ``continuous`` mode.  ``tracked`` overrides the default vertex set whose
    occupation times are recorded.
    """

    tree: TreeConfig
    params: ModelParams
    p: float
    mode: str
    horizon: float
    replicas: int = 1000
    seed: int = DEFAULT_SEED
    clock: str = "eligibility"
    engine: str = "auto"
    tracked: tuple | None = None
    sample_times: tuple | None = None

    def __post_init__(self):
        if self.tree.b != self.params.b:
            raise DomainError(f"tree branching {self.tree.b} differs from params.b={self.params.b}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p!r}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.horizon) and self.horizon >= 0):
            raise DomainError(f"horizon must be finite and >= 0, got {self.horizon!r}")
        if self.mode == "discrete" and int(self.horizon) != self.horizon:
            raise DomainError(f"discrete horizon must be a whole number of steps, got {self.horizon!r}")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise DomainError(f"replicas must be a positive integer, got {self.replicas!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        check_clock(self.clock)
        if self.clock == "discrete":
            raise DomainError("clock names the continuous-time rule: 'eligibility' or 'rings'")
        if self.engine not in ENGINES:
            raise DomainError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.mode == "discrete" and self.engine == "events":
            raise DomainError("the events engine runs continuous time only")
        if self.mode == "continuous" and self.engine == "sweep":
            raise DomainError("the sweep engine runs discrete time only")
        if self.tracked is not None:
            ids = np.asarray(self.tracked)
            if ids.size == 0 or ids.min() < 0 or ids.max() >= self.tree.n_vertices:
                raise DomainError("tracked vertices must be valid, non-empty vertex ids")

    @property
    def clock_rule(self) -> str:
        return "discrete" if self.mode == "discrete" else self.clock

    @property
    def resolved_engine(self) -> str:
        if self.engine != "auto":
            return self.engine
        if self.tree.n_vertices <= AUTO_FORWARD_VERTICES:
            return "sweep" if self.mode == "discrete" else "events"
        return "explore"


@dataclass(frozen=True)
class SimResult:
    """Occupation times of the tracked vertices plus the density curve.

    ``times`` is a masked ``(replicas, n_tracked)`` array; masked entries were
    never occupied up to the horizon.  ``density[i]`` is the mean occupied
    fraction of the tracked set at ``t[i]`` and ``se[i]`` its standard error
    across replicas.
    """

    config: SimConfig
    engine: str
    tracked: np.ndarray
    times: np.ma.MaskedArray
    t: np.ndarray
    density: np.ndarray
    se: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.times.shape[0]

    def occupied_at(self, t: float) -> np.ndarray:
        return np.asarray(self.times.filled(np.inf) <= t)

    def fraction_at(self, t: float) -> np.ndarray:
        return self.occupied_at(t).mean(axis=1)


def mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def default_tracked(config: SimConfig, engine: str) -> tuple[np.ndarray, str]:
    if config.tracked is not None:
        return np.asarray(config.tracked, dtype=np.int64), "explicit"
    if engine in ("explore", "dfs"):
        return np.zeros(1, dtype=np.int64), "root"
    inner = config.tree.interior(config.horizon)
    if inner.size == 0:
        return np.zeros(1, dtype=np.int64), "root (interior set empty)"
    return inner, f"distance >= {config.horizon:g} from the boundary"


def _chunk_times(args) -> np.ndarray:
    config, engine, tracked, start, stop = args
    rkeys = replica_keys(config.seed, stop - start, start=start)
    theta, p, H = config.params.theta, config.p, float(config.horizon)
    clock = config.clock_rule
    if engine == "sweep":
        return sweep(whole_tree(config.tree), theta, p, rkeys, int(H))[:, tracked]
    if engine == "events":
        graph = whole_tree(config.tree)
        return np.stack([events(graph, theta, p, int(k), H, clock)[tracked] for k in rkeys])
    fn = explore if engine == "explore" else dfs
    start_budget = min(H, 2.0)
    return np.stack(
        [_explore_split(fn, config.tree, theta, p, rkeys, int(v), clock, H, start_budget)
         for v in tracked], axis=1)


def _explore_split(fn, tree, theta, p, rkeys, v, clock, H, start) -> np.ndarray:
    """Deepening search that halves the replica batch when the light cone overflows."""
    try:
        return deepening(fn, tree, theta, p, rkeys, v, clock, H, start=start)
    except ResourceError:
        if rkeys.size == 1:
            raise
        mid = rkeys.size // 2
        return np.concatenate([
            _explore_split(fn, tree, theta, p, rkeys[:mid], v, clock, H, start),
            _explore_split(fn, tree, theta, p, rkeys[mid:], v, clock, H, start),
        ])


def occupation_times(config: SimConfig, engine: str, tracked: np.ndarray) -> np.ndarray:
    """``(replicas, n_tracked)`` occupation times; ``inf`` beyond the horizon."""
    size = CHUNK[engine]
    jobs = [(config, engine, tracked, s, min(s + size, config.replicas))
            for s in range(0, config.replicas, size)]
    n = workers()
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(_chunk_times, jobs))
    else:
        parts = [_chunk_times(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def _sample_times(config: SimConfig) -> np.ndarray:
    if config.sample_times is not None:
        return np.asarray(config.sample_times, dtype=float)
    if config.mode == "discrete":
        return np.arange(int(config.horizon) + 1, dtype=float)
    return np.linspace(0.0, config.horizon, 11)


def simulate(config: SimConfig) -> SimResult:
    engine = config.resolved_engine
    tracked, rule = default_tracked(config, engine)
    T = occupation_times(config, engine, tracked)
    times = np.ma.masked_invalid(T)
    t = _sample_times(config)
    density = np.empty(t.size)
    se = np.empty(t.size)
    for i, ti in enumerate(t):
        density[i], se[i] = mean_se((T <= ti).mean(axis=1))
    meta = {"tracked_rule": rule, "clock": config.clock_rule, "workers": workers()}
    return SimResult(config=config, engine=engine, tracked=tracked, times=times, t=t,
                     density=density, se=se, meta=meta)


def simulate_discrete(config: SimConfig) -> SimResult:
    """Synchronous dynamics: vacant with ``>= theta`` occupied neighbours at step n means occupied at n+1."""
    if config.mode != "discrete":
        raise DomainError("simulate_discrete needs mode='discrete'")
    return simulate(config)


def simulate_continuous(config: SimConfig) -> SimResult:
    """Continuous-time dynamics with rate-1 activation of eligible vertices."""
    if config.mode != "continuous":
        raise DomainError("simulate_continuous needs mode='continuous'")
    return simulate(config)


def root_marginal_exact_discrete(params: ModelParams, p: float, depth: int, n: int) -> float:
    """Exact root occupation probability after ``n`` sweeps on a depth-``depth`` rooted tree.

    ``Q_0(m) = p`` (frozen leaves), ``Q_k(0) = p`` and
    ``Q_k(m+1) = p + (1-p) Bin(b, Q_{k-1}(m), theta)``.
    """
    if params.theta < 2:
        raise DomainError("theta < 2 is unsupported: leaves could activate through their parent")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    if depth < 0 or n < 0:
        raise DomainError("depth and n must be >= 0")
    prev = [p] * (n + 1)        # height 0: frozen leaves
    for _ in range(depth):
        cur = [p] * (n + 1)
        for m in range(n):
            cur[m + 1] = p + (1.0 - p) * bin_tail(params.b, prev[m], params.theta)
        prev = cur
    return prev[n]


@dataclass(frozen=True)
class CouplingReport:
    identical: bool
    replicas: int
    mismatched_replicas: list
    region: tuple
    boundary: tuple
    mode: str
    clock: str


def _check_region(tree: TreeConfig, graph: LocalGraph, region) -> tuple[np.ndarray, np.ndarray]:
    A = np.unique(np.asarray(region, dtype=np.int64))
    if A.size == 0:
        raise DomainError("region A must not be empty")
    if A.min() < 0 or A.max() >= tree.n_vertices:
        raise DomainError("region A contains ids outside the tree")
    if tree.is_leaf(A).any():
        raise DomainError("region A touches the simulation boundary (contains leaves)")
    sub = graph.adj[A][:, A]
    n_comp, _ = connected_components(sub, directed=False)
    if n_comp != 1:
        raise DomainError("region A must be connected")
    inA = np.zeros(tree.n_vertices, dtype=bool)
    inA[A] = True
    nb = graph.adj[A].indices
    dA = np.unique(nb[~inA[nb]])
    return A, dA


def coupling_check(config: SimConfig, region) -> CouplingReport:
    """Compare the global dynamics on ``A`` with the dynamics driven through ``boundary(A)``.

    Each boundary vertex ``x`` is run inside its detached subtree (the
    component of the tree minus ``A`` containing ``x``); ``A`` is then run
    with the boundary vertices following those occupation times.  Both
    systems consume the same per-vertex draws, so the coupling predicts exactly
    equal occupation times on ``A``.  Continuous time uses the Poisson-ring
    clock.
    """
    tree = config.tree
    graph = whole_tree(tree)
    A, dA = _check_region(tree, graph, region)
    theta, p, H = config.params.theta, config.p, float(config.horizon)
    clock = "discrete" if config.mode == "discrete" else "rings"

    inA = np.zeros(tree.n_vertices, dtype=bool)
    inA[A] = True
    rest = np.nonzero(~inA)[0]
    _, labels = connected_components(graph.adj[rest][:, rest], directed=False)
    pos = np.searchsorted(rest, dA)
    comps = [induced(tree, graph, rest[labels == labels[i]]) for i in pos]

    local = np.concatenate([A, dA])
    a_graph = induced(tree, graph, local)
    a_idx = np.arange(A.size)
    d_local = np.arange(A.size, local.size)

    rkeys = replica_keys(config.seed, config.replicas)
    mismatched = []
    if config.mode == "discrete":
        glob = sweep(graph, theta, p, rkeys, int(H))[:, A]
        driven = {}
        for j, (x, comp) in enumerate(zip(dA, comps)):
            k = int(np.searchsorted(comp.ids, x))
            driven[int(d_local[j])] = sweep(comp, theta, p, rkeys, int(H))[:, k]
        loc = sweep(a_graph, theta, p, rkeys, int(H), driven=driven)[:, a_idx]
        mismatched = np.nonzero(~np.all(glob == loc, axis=1))[0].tolist()
    else:
        for r, key in enumerate(rkeys.tolist()):
            glob = events(graph, theta, p, key, H, clock)[A]
            driven = {}
            for j, (x, comp) in enumerate(zip(dA, comps)):
                k = int(np.searchsorted(comp.ids, x))
                driven[int(d_local[j])] = float(events(comp, theta, p, key, H, clock)[k])
            loc = events(a_graph, theta, p, key, H, clock, driven=driven)[a_idx]
            if not np.array_equal(glob, loc):
                mismatched.append(r)
    return CouplingReport(identical=not mismatched, replicas=config.replicas,
                          mismatched_replicas=mismatched, region=tuple(A.tolist()),
                          boundary=tuple(dA.tolist()), mode=config.mode, clock=clock)


def connected_region(tree: TreeConfig, size: int, center: int = 0) -> np.ndarray:
    """The first ``size`` vertices met by breadth-first search from ``center``."""
    order = [center]
    seen = {center}
    i = 0
    while len(order) < size and i < len(order):
        v = order[i]
        i += 1
        for u in tree.neighbours_int(v, tree.level_of_int(v)):
            if u not in seen:
                seen.add(u)
                order.append(u)
                if len(order) == size:
                    break
    return np.asarray(order[:size], dtype=np.int64)


@dataclass(frozen=True)
class WindowReport:
    """Configuration statistics at the analytic window time ``t_h(q)``."""

    q: float
    h: float
    t_h: float
    density: float
    se: float
    candidates: dict
    z_scores: dict
    pair_both: float
    pair_both_se: float
    pair_covariance: float
    r_h: float
    two_scale_fraction: float
    curve: list
    statement: str


def window_statistics(config: SimConfig, q: float,
                      landscape: Landscape | None = None) -> WindowReport:
    """Density and nearest-neighbour pair statistics at ``t_h(q)`` for ``p = p_T + h``.

    The empirical density of the centre is compared with ``Bin(b+1, q, theta)``,
    with ``p_h + (1-p_h) Bin(b+1, q, theta)`` and with the exact single-site
    law ``P_{p_h}(t_h(q))``.  The statement names the closer of the first two.
    """
    if config.mode != "continuous":
        raise DomainError("window statistics need continuous time")
    land = landscape if landscape is not None else critical(config.params)
    h = config.p - land.p_T
    if not h > 0:
        raise DomainError(f"p must exceed p_T={land.p_T!r}; got p={config.p!r}")
    t_h = hitting_time_critical_frame(land, q, h)
    if t_h > config.horizon:
        raise DomainError(f"t_h(q)={t_h!r} lies beyond the simulated horizon {config.horizon!r}")

    tree = config.tree
    centre = 0
    nbrs = tree.neighbours_int(centre, 0)
    tracked = (centre, *nbrs)
    cfg = replace(config, tracked=tracked)
    res = simulate(cfg)
    T = res.times.filled(np.inf)
    occ = T <= t_h
    density, se = mean_se(occ[:, 0])
    both = occ[:, :1] & occ[:, 1:]
    pair_both, pair_se = mean_se(both.mean(axis=1))
    pair_cov = float(pair_both - density * occ[:, 1:].mean())

    b1, th = config.params.b + 1, config.params.theta
    tail = bin_tail(b1, q, th)
    exact = float(ode_trace(config.params, config.p, t_h).at(t_h)[1][0])
    cands = {"tail": tail, "shifted_tail": config.p + (1.0 - config.p) * tail, "exact_law": exact}
    zs = {k: float((density - v) / se) if se > 0 else float("nan") for k, v in cands.items()}

    r_h = h ** -0.25
    scale = land.alpha / math.sqrt(h)
    tc = T[:, 0]
    two_scale = float(np.mean((tc <= r_h) | (np.abs(tc - scale) <= r_h)))

    curve = []
    t_grid = np.asarray(res.t, dtype=float)
    law = ode_trace(config.params, config.p, float(max(t_grid.max(), t_h)), t_eval=t_grid)
    P_grid = law.at(t_grid)[1]
    for ti, P in zip(t_grid, P_grid):
        m, s = mean_se(T[:, 0] <= ti)
        curve.append({"t": float(ti), "density": m, "se": s, "P": float(P),
                      "z": float((m - P) / s) if s > 0 else float("nan")})

    names = {"tail": "Bin(b+1,q,theta)", "shifted_tail": "p_h + (1-p_h) Bin(b+1,q,theta)"}
    closer = min(names, key=lambda k: abs(zs[k]))
    other = "shifted_tail" if closer == "tail" else "tail"
    head = f"density {density:.6f} +- {se:.6f} at t_h={t_h:.6f}"
    scores = (f"{names[closer]} |z|={abs(zs[closer]):.2f}, {names[other]} "
              f"|z|={abs(zs[other]):.2f}, exact single-site law P_(p_h)(t_h) "
              f"|z|={abs(zs['exact_law']):.2f}")
    if abs(zs[closer]) <= 3:
        statement = f"{head} matches {names[closer]} ({scores})"
    else:
        statement = (f"{head} matches neither candidate within 3 SE; closer is "
                     f"{names[closer]} ({scores})")
    return WindowReport(q=q, h=h, t_h=t_h, density=density, se=se, candidates=cands,
                        z_scores=zs, pair_both=pair_both, pair_both_se=pair_se,
                        pair_covariance=pair_cov, r_h=r_h, two_scale_fraction=two_scale,
                        curve=curve, statement=statement)
