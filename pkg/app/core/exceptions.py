"""Error hierarchy of the solver.

Configuration and precondition failures derive from ``ValueError`` and map to
CLI exit code 2; numerical failures derive from ``RuntimeError`` and map to
exit code 3.
"""

from typing import List, Optional


class DlrError(Exception):
    """Base class for all solver errors."""


class ConfigError(DlrError, ValueError):
    """Invalid configuration or violated precondition."""


class TensorGridTooLargeError(ConfigError):
    """Requested tensor quadrature grid exceeds the configured cap."""


class MeasureMismatchError(DlrError, ValueError):
    """Operands live on different discrete measures."""


class NonOrthonormalBasisError(DlrError, ValueError):
    """A stochastic basis flagged orthonormal fails the Gram check."""


class NumericalError(DlrError, RuntimeError):
    """Numerical failure during a solve."""


class FactorizationError(NumericalError):
    pass


class EigensolveError(NumericalError):
    pass


class InconsistentSystemError(NumericalError):
    """Right-hand side of a singular stochastic system is not in its range."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class BlowUpError(NumericalError):
    """Non-finite values appeared in the state."""


class ConvergenceError(NumericalError):
    """Fixed-point iteration of the implicit scheme did not converge."""

    def __init__(self, message: str, history: Optional[List[float]] = None):
        super().__init__(message)
        self.history = list(history or [])
