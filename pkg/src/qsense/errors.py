"""Exception types raised across the package."""


class QsenseError(Exception):
    """Base class for all package errors."""


class DomainError(QsenseError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedError(QsenseError):
    """The requested quantity is undefined for this kind of input."""


class DegenerateOutcomeError(QsenseError):
    """A measurement outcome has zero probability (zero evidence)."""


class InfeasiblePairError(QsenseError):
    """The Personick equation has no solution on the support of Gamma."""


class SingularDenominatorError(QsenseError):
    """A closed-form expression hits a vanishing denominator."""


class ScheduleError(QsenseError, ValueError):
    """A control schedule violates its ordering or range constraints."""


class TruncationError(QsenseError):
    """A pulse would move population past the motional cutoff."""


class ConfigError(QsenseError):
    """Invalid or incomplete run configuration."""


class NumericalFailure(QsenseError):
    """An optimizer or solver did not reach a usable result."""
