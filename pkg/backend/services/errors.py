"""Exception hierarchy shared by every twin-beam service."""

from typing import Optional


class TwinBeamError(Exception):
    """Base class for data and computation errors"""


class ParameterDomainError(TwinBeamError, ValueError):
    """A physical parameter lies outside its domain"""


class ConfigurationError(TwinBeamError, ValueError):
    """Inconsistent run or sweep configuration"""


class EmptyDataError(TwinBeamError, ValueError):
    """No shots or records to work with"""


class UndefinedStatisticError(TwinBeamError):
    """A statistic is undefined for the data (zero variance, zero mean, ...)"""


class SubPoissonianMarginalError(UndefinedStatisticError):
    """Mode-number estimator needs a super-Poissonian marginal"""


class ClassicalDataError(TwinBeamError):
    """The data show no sub-shot-noise correlation"""


class ModelMismatchError(TwinBeamError):
    """The data cannot be described by the three-component multithermal model"""


class FitFailureError(TwinBeamError):
    """Optimizer did not converge; carries the best parameters seen"""

    def __init__(self, message: str, best_model=None, best_residual: Optional[float] = None):
        super().__init__(message)
        self.best_model = best_model
        self.best_residual = best_residual


class PrecisionError(TwinBeamError, ArithmeticError):
    """Alternating Laguerre sums lost too many digits"""


class SingularQuasiDistributionError(TwinBeamError):
    """Series coefficients do not decay; the quasi-distribution is singular"""


class CoverageError(TwinBeamError):
    """The intensity grid does not cover the Mandel kernel"""


class ShotParseError(TwinBeamError, ValueError):
    """Malformed shot file"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShotValidationError(ShotParseError):
    """Shot counts that are negative or not integers"""


class SchemaVersionError(TwinBeamError, ValueError):
    """Persisted file written with another schema version"""

    def __init__(self, expected: str, found: Optional[str]):
        super().__init__(f"schema version mismatch: expected {expected!r}, found {found!r}")
        self.expected = expected
        self.found = found
