"""Exception hierarchy shared by the theory solvers, the simulation lab and the front ends.

Front ends map ``ConfigError`` to exit status 2 and ``NumericalError`` to exit status 3.
"""

from typing import Any


class RiskError(Exception):
    """Base class for every error raised by refpanel."""

    exit_code = 1


class ConfigError(RiskError):
    exit_code = 2


class ConfigParse(ConfigError):
    """Malformed or incomplete configuration."""


class HeritabilityOutOfRange(ConfigError):
    pass


class InvalidPrior(ConfigError):
    pass


class InvalidCovariance(ConfigError):
    pass


class OutOfRange(ConfigError):
    """A scalar argument lies outside the domain of the operation."""


class DimensionTooSmall(ConfigError):
    pass


class PreconditionError(ConfigError):
    pass


class DatasetFormatError(ConfigError):
    pass


class NumericalError(RiskError):
    exit_code = 3


class NoConvergence(NumericalError):
    def __init__(self, message: str, *, max_iter: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.max_iter = max_iter
        self.residual = residual


class InfeasibleRegime(NumericalError):
    """No bracket of the state-evolution root exists for the requested parameters."""


class NonFinite(NumericalError):
    pass


class NonPositiveRho(NumericalError):
    pass


class AlphaBelowMin(NumericalError):
    def __init__(self, message: str, *, alpha: float, alpha_min: float | None = None):
        super().__init__(message)
        self.alpha = alpha
        self.alpha_min = alpha_min


class BracketFailure(NumericalError):
    pass


class Diverged(NumericalError):
    """An iterative recursion blew up; ``trajectory`` holds the iterates computed so far."""

    def __init__(self, message: str, *, trajectory: list[Any] | None = None):
        super().__init__(message)
        self.trajectory = trajectory or []


class SingularSystem(NumericalError):
    pass
