"""Steering-certified quantum randomness from continuous-variable homodyne data.

The subpackages follow the protocol: Gaussian steering of a shared two-mode
state (``gaussian``), Fock-space conditional states and binned quadrature
POVMs (``fock``, ``coarse``), semidefinite certification of Bob's min-entropy
(``sdp``, ``certify``), simulated acquisition (``acquisition``), Toeplitz
extraction (``extract``) and statistical testing (``stattests``).
"""

from .errors import (ConvergenceError, InvalidStateError, NumericalError, SecurityGateError,
                     SteerQrngError, TruncationError, ValidationError)
from .extract import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConvergenceError",
    "InvalidStateError",
    "NumericalError",
    "SecurityGateError",
    "SteerQrngError",
    "TruncationError",
    "ValidationError",
    "__version__",
]
