"""Exact stochastic bootstrap dynamics on finite regular trees."""

from .core import (
    DEFAULT_SEED,
    CouplingReport,
    SimConfig,
    SimResult,
    WindowReport,
    connected_region,
    coupling_check,
    root_marginal_exact_discrete,
    simulate,
    simulate_continuous,
    simulate_discrete,
    window_statistics,
)
from .geometry import TreeConfig

__all__ = [
    "DEFAULT_SEED",
    "CouplingReport",
    "SimConfig",
    "SimResult",
    "TreeConfig",
    "WindowReport",
    "connected_region",
    "coupling_check",
    "root_marginal_exact_discrete",
    "simulate",
    "simulate_continuous",
    "simulate_discrete",
    "window_statistics",
]
