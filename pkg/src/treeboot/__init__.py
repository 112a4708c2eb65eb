"""Bootstrap percolation on regular trees: critical structure, density dynamics,
cutoff asymptotics and an exact Monte Carlo simulator."""

from .errors import (
    DegenerateParamsError,
    DomainError,
    NumericalError,
    ResourceError,
    StructureError,
    TreebootError,
    UnreachableError,
)
from .landscape import Landscape, ModelParams, critical, terminal_density

__version__ = "0.1.0"

__all__ = [
    "DegenerateParamsError",
    "DomainError",
    "Landscape",
    "ModelParams",
    "NumericalError",
    "ResourceError",
    "StructureError",
    "TreebootError",
    "UnreachableError",
    "__version__",
    "critical",
    "terminal_density",
]
