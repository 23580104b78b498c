"""Exception types shared across the package."""


class EfgeoError(Exception):
    """Base class for all package errors."""


class MetricDegeneracyError(EfgeoError):
    """Mass metric is not positive definite (or determinant underflows the floor)."""


class ChartDegeneracyError(EfgeoError):
    """Coordinate chart jacobian is singular at the requested point."""


class GaugeFixingError(EfgeoError):
    """A phase-fixing convention cannot be applied (e.g. vanishing reference overlap)."""


class SpecError(EfgeoError):
    """Malformed chart/metric/model specification file."""
