"""Exception hierarchy for spinforge.

Every failure raised by the package derives from :class:`SpinforgeError` so
callers (and the CLI) can separate physics/analysis failures from usage
errors with a single ``except`` clause.
"""

from typing import Any, List, Optional


class SpinforgeError(Exception):
    """Base error for spinforge operations."""


class ContractViolationError(SpinforgeError):
    """Raised when an input breaks an operation's stated precondition."""


class NumericalFailureError(SpinforgeError):
    """Raised when a numerical kernel fails to converge."""


class SingularInputError(SpinforgeError):
    """Raised when a formula is evaluated at a singular point."""


class PerturbativeRegimeError(SpinforgeError):
    """Raised when a perturbative formula is used outside its regime."""


class TruncationError(SpinforgeError):
    """Raised when a truncated Fock space loses too much population."""


class InvalidCalibrationError(SpinforgeError):
    """Raised when a pulse calibration is physically meaningless."""


class InsufficientDataError(SpinforgeError):
    """Raised when a dataset cannot support the requested fit."""


class InputMismatchError(SpinforgeError):
    """Raised when paired inputs do not describe the same setup."""


class ReconstructionError(SpinforgeError):
    """Raised when the maximum-likelihood projection fails on every start."""

    def __init__(self, message: str, best_iterate: Any = None, cost: Optional[float] = None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.cost = cost


class FitError(SpinforgeError):
    """Raised when a nonlinear model fit does not converge."""

    def __init__(self, message: str, trace: Optional[List[dict]] = None):
        super().__init__(message)
        self.trace = trace or []


class ConfigError(SpinforgeError):
    """Raised when a run configuration fails validation."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
