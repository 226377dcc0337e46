"""Exception hierarchy shared by every module of the package."""


class HestonError(Exception):
    """Base class for all package errors."""


class DomainError(HestonError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class FellerViolation(DomainError):
    """Parameters do not satisfy the strict Feller condition."""


class ConfigError(HestonError, ValueError):
    """Invalid or mutually inconsistent configuration."""


class GridMismatch(ConfigError):
    """A requested time does not fall on the stored sampling grid."""


class HorizonTooShort(ConfigError):
    """Simulated horizon does not cover the requested observations."""


class InsufficientData(HestonError, ValueError):
    """Too few observations for the requested lag."""


class EstimationDegenerate(HestonError, ArithmeticError):
    """Empirical moments fall outside the domain of the parameter map."""


class NumericOverflow(HestonError, OverflowError):
    """A result exceeds the floating point range."""
