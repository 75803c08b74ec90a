"""Shared exception types."""


class AmcError(Exception):
    """Base class for all package errors."""


class DomainError(AmcError):
    """Input outside the mathematical domain of an operation."""


class RangeError(AmcError):
    """Requested value outside the attainable range (carries the bounds)."""

    def __init__(self, msg, lo=None, hi=None):
        super().__init__(msg)
        self.lo = lo
        self.hi = hi


class GridError(AmcError):
    """Grid construction failed (domain too thin for the spacing, ...)."""


class ResolutionError(AmcError):
    """Requested quantity needs more resolution than available."""


class EllipticityError(AmcError):
    """Coefficient matrix not positive definite where required."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


class ConvergenceError(AmcError):
    """Iteration failed to converge; carries the failure report."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class BarrierError(AmcError):
    """Barrier construction failed (pathological boundary data)."""


class ConfigError(AmcError):
    """Bad experiment configuration."""
