"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
numerical failures with 3 and security-gate refusals with 4.
"""


class SteerQrngError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(SteerQrngError, ValueError):
    exit_code = 2


class InvalidStateError(ValidationError):
    """A covariance matrix or density matrix is not a valid quantum state."""


class NumericalError(SteerQrngError, ArithmeticError):
    exit_code = 3


class TruncationError(NumericalError):
    """Fock-space truncation lost more probability than allowed."""


class ConvergenceError(NumericalError):
    pass


class SecurityGateError(SteerQrngError):
    """Extraction was requested without certified entropy."""

    exit_code = 4
