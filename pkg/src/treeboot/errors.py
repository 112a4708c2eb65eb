"""Exception hierarchy shared by the library and the command line driver."""


class TreebootError(Exception):
    """Base class for every error raised by treeboot."""

    exit_code = 5


class DomainError(TreebootError, ValueError):
    """An argument lies outside the domain of the requested operation."""

    exit_code = 3


class DegenerateParamsError(DomainError):
    """(b, theta) violates b > theta >= 2, so there is no critical structure."""


class StructureError(DomainError):
    """The landscape lacks the requested feature (no spinodal, no bracket)."""


class UnreachableError(DomainError):
    """A target density is never reached by the dynamics."""


class ResourceError(TreebootError):
    """A simulation would exceed the configured memory or work budget."""

    exit_code = 4


class NumericalError(TreebootError, ArithmeticError):
    """A numerical routine failed to meet its own accuracy contract."""

    exit_code = 5
