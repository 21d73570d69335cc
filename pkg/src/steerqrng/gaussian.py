"""Two-mode Gaussian covariance-matrix algebra.

Conventions: quadratures are ordered ``(q_A, p_A, q_B, p_B)`` and expressed
in shot-noise units, so the vacuum has unit variance and the uncertainty
relation reads ``sigma + i*Omega >= 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidStateError, ValidationError

SYMMETRY_TOL = 1e-12
PHYSICAL_TOL = 1e-9
PINV_RCOND = 1e-12

OMEGA1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
OMEGA2 = np.kron(np.eye(2), OMEGA1)

QUADRATURE_INDEX = {"q": 0, "p": 1}


@dataclass(frozen=True)
class CovMat:
    """Covariance matrix of a two-mode Gaussian state."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.shape == (16,):
            m = m.reshape(4, 4)
        if m.shape != (4, 4):
            raise ValidationError(f"covariance matrix must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("covariance matrix has non-finite entries")
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(m))):
            raise ValidationError("covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def sigma_a(self) -> np.ndarray:
        return self.entries[:2, :2]

    @property
    def sigma_b(self) -> np.ndarray:
        return self.entries[2:, 2:]

    @property
    def corr(self) -> np.ndarray:
        """Cross block ``C = cov(A, B)`` (upper-right 2x2)."""
        return self.entries[:2, 2:]

    @classmethod
    def from_blocks(cls, sigma_a, sigma_b, corr) -> "CovMat":
        corr = np.asarray(corr, dtype=float)
        return cls(np.block([[np.asarray(sigma_a, float), corr],
                             [corr.T, np.asarray(sigma_b, float)]]))

    @classmethod
    def standard_form(cls, var_qa, var_pa, var_qb, var_pb, c_q, c_p) -> "CovMat":
        """CM with vanishing q-p cross terms, as reconstructed in experiments."""
        return cls.from_blocks(np.diag([var_qa, var_pa]), np.diag([var_qb, var_pb]),
                               np.diag([c_q, c_p]))

    def to_list(self) -> list[float]:
        return [float(x) for x in self.entries.ravel()]

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(cls, text: str) -> "CovMat":
        return cls(np.array(json.loads(text), dtype=float))

    def __eq__(self, other):
        return isinstance(other, CovMat) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def as_covmat(cm) -> CovMat:
    return cm if isinstance(cm, CovMat) else CovMat(cm)


@dataclass(frozen=True)
class ConditionalGaussian:
    """Alice's Gaussian state after Bob observed outcome ``z``.

    The covariance ``cm`` does not depend on ``z``; the mean is
    ``mean_slope * z``.
    """

    cm: np.ndarray
    mean_slope: np.ndarray
    outcome_variance: float

    def mean(self, z):
        return np.multiply.outer(np.asarray(z, float), self.mean_slope)


@dataclass(frozen=True)
class ChannelParams:
    eta0: float = 0.9
    alpha_db_per_km: float = 0.2
    length_km: float = 0.0
    delta: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.eta0 <= 1.0:
            raise ValidationError(f"eta0 must lie in (0, 1], got {self.eta0}")
        if self.alpha_db_per_km < 0:
            raise ValidationError("loss coefficient must be non-negative")
        if self.length_km < 0:
            raise ValidationError("fiber length must be non-negative")
        if self.delta < 0:
            raise ValidationError("excess noise must be non-negative")

    @property
    def transmission(self) -> float:
        return transmission(self.eta0, self.alpha_db_per_km, self.length_km)


def transmission(eta0: float, alpha_db_per_km: float, length_km: float) -> float:
    """Fiber transmission ``eta0 * 10**(-alpha*L/10)``."""
    return eta0 * 10.0 ** (-alpha_db_per_km * length_km / 10.0)


@dataclass(frozen=True)
class CmDiagnostic:
    symmetry_defect: float
    min_eigenvalue: float
    passed: bool


def validate_cm(cm, tol: float = PHYSICAL_TOL) -> CmDiagnostic:
    """Report symmetry and the uncertainty-relation margin of a 4x4 matrix."""
    m = np.asarray(cm.entries if isinstance(cm, CovMat) else cm, dtype=float)
    defect = float(np.max(np.abs(m - m.T)))
    sym = 0.5 * (m + m.T)
    min_eig = float(np.min(np.linalg.eigvalsh(sym + 1j * OMEGA2)))
    return CmDiagnostic(defect, min_eig, defect <= 1e-12 and min_eig >= -tol)


def is_physical(cm, tol: float = PHYSICAL_TOL) -> bool:
    return validate_cm(cm, tol).passed


def _require_physical(cm: CovMat, what="covariance matrix"):
    diag = validate_cm(cm)
    if not diag.passed:
        raise InvalidStateError(
            f"{what} violates the uncertainty relation "
            f"(min eigenvalue of sigma + i*Omega = {diag.min_eigenvalue:.3e})")


def epr_source_cm(sq1_db: float, asq1_db: float, sq2_db: float, asq2_db: float,
                  eta_det: float = 1.0) -> CovMat:
    """EPR state from two squeezed beams interfered on a balanced beam splitter.

    Squeezing levels are given in dB (negative means below shot noise). A
    uniform detection efficiency ``eta_det`` is applied to the result.
    """
    if not 0.0 < eta_det <= 1.0:
        raise ValidationError(f"detection efficiency must lie in (0, 1], got {eta_det}")
    vs1, va1, vs2, va2 = (10.0 ** (x / 10.0) for x in (sq1_db, asq1_db, sq2_db, asq2_db))
    for vs, va in ((vs1, va1), (vs2, va2)):
        if vs * va < 1.0 - 1e-12:
            raise InvalidStateError(
                f"squeezing {10 * math.log10(vs):.3f} dB with antisqueezing "
                f"{10 * math.log10(va):.3f} dB violates the uncertainty relation")
    vq = 0.5 * (va1 + vs2)
    vp = 0.5 * (vs1 + va2)
    c_q = 0.5 * (va1 - vs2)
    c_p = -0.5 * (va2 - vs1)
    m = CovMat.standard_form(vq, vp, vq, vp, c_q, c_p).entries
    m = eta_det * m + (1.0 - eta_det) * np.eye(4)
    out = CovMat(m)
    _require_physical(out, "EPR source CM")
    return out


def apply_fiber_channel(cm, params: ChannelParams) -> CovMat:
    """Send mode B through a lossy channel with excess noise ``delta``."""
    cm = as_covmat(cm)
    eta = params.transmission
    sb = eta * cm.sigma_b + (1.0 - eta) * (1.0 + params.delta) * np.eye(2)
    return CovMat.from_blocks(cm.sigma_a, sb, math.sqrt(eta) * cm.corr)


def steering_log_ratio(cm) -> float:
    """``ln(det sigma_B / det sigma) / 2`` before clipping at zero."""
    cm = as_covmat(cm)
    det_ab = float(np.linalg.det(cm.entries))
    det_b = float(np.linalg.det(cm.sigma_b))
    if det_ab <= 0 or det_b <= 0:
        raise InvalidStateError(f"singular covariance matrix (det = {det_ab:.3e})")
    return 0.5 * math.log(det_b / det_ab)


def gaussian_steering(cm) -> float:
    """Gaussian steerability from B to A, ``max(0, ln(det sigma_B / det sigma)/2)``."""
    return max(0.0, steering_log_ratio(cm))


def condition_on_quadrature(cm, y: str) -> ConditionalGaussian:
    """Condition Alice's mode on an ideal homodyne measurement of Bob's quadrature ``y``."""
    cm = as_covmat(cm)
    if y not in QUADRATURE_INDEX:
        raise ValidationError(f"quadrature must be 'q' or 'p', got {y!r}")
    k = QUADRATURE_INDEX[y]
    b = cm.sigma_b
    if b[k, k] <= 0:
        raise InvalidStateError("measured quadrature has non-positive variance")
    proj = np.zeros((2, 2))
    proj[k, k] = 1.0
    pinv = np.linalg.pinv(proj @ b @ proj, rcond=PINV_RCOND)
    c = cm.corr
    cond = cm.sigma_a - c @ pinv @ c.T
    cond = 0.5 * (cond + cond.T)
    slope = (c @ pinv)[:, k]
    return ConditionalGaussian(cond, slope, float(b[k, k]))


def reduced_cm(cm, mode: str = "A") -> np.ndarray:
    cm = as_covmat(cm)
    return cm.sigma_a.copy() if mode == "A" else cm.sigma_b.copy()


def quadrature_vector(theta: float) -> np.ndarray:
    """Coefficients of ``cos(theta) q + sin(theta) p``."""
    return np.array([math.cos(theta), math.sin(theta)])


# Reconstructed CMs at 0.002, 0.5, 1 and 2 km as reported by the experiment:
# (var q_A, var p_A, var q_B, var p_B, C(q_A,q_B), C(p_A,p_B)).
MEASURED_CM_VALUES = {
    0.002: (1.35, 1.36, 1.38, 1.33, 0.77, -0.79),
    0.5: (1.32, 1.35, 1.35, 1.33, 0.73, -0.76),
    1.0: (1.32, 1.34, 1.35, 1.32, 0.73, -0.74),
    2.0: (1.30, 1.31, 1.33, 1.30, 0.69, -0.68),
}

FIXTURE_DIR = Path(__file__).parent / "fixtures"


def measured_cm(length_km: float) -> CovMat:
    return CovMat.standard_form(*MEASURED_CM_VALUES[length_km])


def fixture_path(length_km: float) -> Path:
    return FIXTURE_DIR / f"cm_{length_km:g}km.csv"


def load_cm_csv(path) -> CovMat:
    return CovMat(np.loadtxt(path, delimiter=","))


def save_cm_csv(cm, path) -> None:
    np.savetxt(path, as_covmat(cm).entries, delimiter=",", fmt="%.10g")


def load_fixture(length_km: float) -> CovMat:
    return load_cm_csv(fixture_path(length_km))
