"""Exception types raised by the model, estimation and I/O layers.

Plain domain violations on scalar arguments (negative times, quantile
levels outside (0, 1), nonpositive severities) raise ``ValueError``;
the classes below mark failures that callers may want to handle
specifically.
"""


class MapRiskError(Exception):
    """Base class for all package-specific errors."""


class NotAGeneratorError(MapRiskError):
    """Row sums of D0 + D1 are not zero: the pair is not a generator."""


class UnstableRateMatrixError(MapRiskError):
    """D0 has an eigenvalue with nonnegative real part (or is singular)."""


class NegativeRateError(MapRiskError):
    """A rate entry that must be nonnegative is negative."""


class ConstraintViolatedError(MapRiskError):
    """Canonical parameters violate their sign constraints."""


class SingularSystemError(MapRiskError):
    """A stationary system is degenerate (reducible or singular)."""


class DegenerateVarianceError(MapRiskError):
    """A variance needed for normalization is zero (constant data)."""


class SingularCorrectionError(MapRiskError):
    """The fundamental-matrix correction e*pi + D is singular."""


class DegenerateConditioningError(MapRiskError):
    """A conditional probability has (numerically) zero denominator."""


class InsufficientDataError(MapRiskError):
    """No conditioning events exist in the trace for the request."""


class EmptyTraceError(MapRiskError):
    """The trace contains no observations."""


class TraceTooShortError(MapRiskError):
    """The trace is too short for the requested estimate."""


class OptimizerFailedError(MapRiskError):
    """No feasible improvement was found by the local optimizer."""


class InfiniteMomentError(MapRiskError):
    """The requested moment order is at or beyond the tail exponent."""


class TraceParseError(MapRiskError):
    """A trace file row failed to parse; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NegativeValueError(TraceParseError):
    """A trace file row holds a negative value."""
