"""Exception types shared across the package."""


class CausalcastError(Exception):
    """Base class for all package errors."""


class ShapeError(CausalcastError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class FormatError(CausalcastError, ValueError):
    """A file does not parse as the expected text format."""


class DataError(CausalcastError, ValueError):
    """Input data violates a content invariant (non-finite values, missing fields)."""


class ConfigError(CausalcastError, ValueError):
    """A configuration value is invalid or unknown."""


class StationarityError(CausalcastError, ValueError):
    """A VAR model is not stationary (companion spectral radius >= 1)."""


class EvaluationError(CausalcastError, ArithmeticError):
    """A function under numerical check produced a non-finite value."""


class TrainingError(CausalcastError, RuntimeError):
    """Training aborted because a loss or gradient became non-finite."""


class UndefinedMetricError(CausalcastError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
