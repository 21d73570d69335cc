"""Truncated Fock-space representation of Alice's single-mode states.

Ladder operators follow ``q = a + a^dagger`` and ``p = i(a^dagger - a)`` so the
vacuum has unit quadrature variance, matching :mod:`steerqrng.gaussian`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import InvalidStateError, TruncationError, ValidationError
from .quadrature import adaptive_gl

NEG_EIG_TOL = 1e-8
DEFAULT_DEFICIT_TOL = 1e-6


@dataclass(frozen=True)
class FockState:
    """A (possibly sub-normalized) density matrix cropped to ``d_F`` levels."""

    matrix: np.ndarray
    trace_weight: float
    truncation_deficit: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PovmElement:
    matrix: np.ndarray
    angle: float
    support: tuple


def annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)


def quadrature_operators(d: int) -> tuple[np.ndarray, np.ndarray]:
    a = annihilation(d)
    return a + a.T, 1j * (a.T - a)


def clip_psd(m: np.ndarray, tol: float = NEG_EIG_TOL) -> np.ndarray:
    """Clip roundoff-level negative eigenvalues, keeping the trace.

    Eigenvalues below ``-tol`` mean the matrix is genuinely not PSD and raise.
    """
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    if w[0] >= 0:
        return m
    if w[0] < -tol:
        raise InvalidStateError(f"matrix has eigenvalue {w[0]:.3e} below -{tol:g}")
    tr = float(np.real(np.trace(m)))
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    new_tr = float(np.real(np.trace(out)))
    if new_tr > 0:
        out *= tr / new_tr
    return 0.5 * (out + out.conj().T)


def squeeze_angle(cond: np.ndarray) -> tuple[float, float, float]:
    """Williamson data of a single-mode CM: (nu, r, phi).

    ``cond = nu * R(phi) diag(e^{-2r}, e^{2r}) R(phi)^T`` with the squeezed
    axis along ``(cos phi, sin phi)``.
    """
    cond = np.asarray(cond, dtype=float)
    lam, vec = np.linalg.eigh(0.5 * (cond + cond.T))
    det = float(lam[0] * lam[1])
    if lam[0] <= 0 or det < 1.0 - 1e-6:
        raise InvalidStateError(f"single-mode CM is unphysical (det = {det:.6g})")
    nu = math.sqrt(max(det, 1.0))
    r = 0.25 * math.log(lam[1] / lam[0])
    phi = math.atan2(vec[1, 0], vec[0, 0])
    return nu, r, phi


def padded_dimension(d_f: int, alpha_abs: float) -> int:
    return d_f + max(10, math.ceil(alpha_abs ** 2 + 4 * alpha_abs))


def centered_gaussian_padded(cond: np.ndarray, dim: int) -> np.ndarray:
    """Zero-mean Gaussian state as a ``dim x dim`` matrix (not renormalized).

    The thermal and squeezing stages run in a larger scratch space and the
    result is cropped, so only the truncation of the final state matters.
    """
    nu, r, phi = squeeze_angle(cond)
    work = dim + 10 + math.ceil(8 * math.sinh(r) ** 2)
    nbar = 0.5 * (nu - 1.0)
    k = np.arange(work)
    if nbar <= 0:
        populations = (k == 0).astype(float)
    else:
        populations = np.exp(k * math.log(nbar) - (k + 1) * math.log1p(nbar))
    rho = np.diag(populations).astype(complex)
    if r > 0:
        a = annihilation(work)
        zeta = r * np.exp(2j * phi)
        s_op = expm(0.5 * (np.conj(zeta) * (a @ a) - zeta * (a.T @ a.T)))
        rho = s_op @ rho @ s_op.conj().T
    return rho[:dim, :dim]


def displacement_generator(alpha: complex, dim: int) -> np.ndarray:
    a = annihilation(dim)
    return alpha * a.T - np.conj(alpha) * a


def gaussian_to_fock(cond, mean, d_f: int, deficit_tol: float = DEFAULT_DEFICIT_TOL) -> FockState:
    """Density matrix of the single-mode Gaussian state with the given moments."""
    if d_f < 2:
        raise ValidationError("Fock dimension must be at least 2")
    mean = np.asarray(mean, dtype=float)
    alpha = 0.5 * (mean[0] + 1j * mean[1])
    pad = padded_dimension(d_f, abs(alpha))
    rho = centered_gaussian_padded(cond, pad)
    if alpha != 0:
        d_op = expm(displacement_generator(alpha, pad))
        rho = d_op @ rho @ d_op.conj().T
    rho = rho[:d_f, :d_f]
    tr = float(np.real(np.trace(rho)))
    deficit = max(0.0, 1.0 - tr)
    if deficit > deficit_tol:
        raise TruncationError(
            f"truncation deficit {deficit:.2e} exceeds {deficit_tol:g}; increase d_F above {d_f}")
    rho = clip_psd(rho)
    return FockState(rho, tr, deficit)


class DisplacedFamily:
    """States ``D(kappa z) rho0 D(kappa z)^dagger`` cropped to ``d_F``, for many z.

    The displacement generator is diagonalized once, so each state (or any
    weighted integral over z) costs only elementwise phases and two products.
    """

    def __init__(self, cond, mean_slope, d_f: int, z_max: float):
        mean_slope = np.asarray(mean_slope, dtype=float)
        self.kappa = 0.5 * (mean_slope[0] + 1j * mean_slope[1])
        self.d_f = d_f
        self.pad = padded_dimension(d_f, abs(self.kappa) * z_max)
        rho0 = centered_gaussian_padded(cond, self.pad)
        # K = kappa a^dag - kappa^* a is anti-Hermitian: K = i H.
        h = -1j * displacement_generator(self.kappa, self.pad)
        self.freqs, v = np.linalg.eigh(0.5 * (h + h.conj().T))
        self.p = v.conj().T @ rho0 @ v
        self.v_crop = v[:d_f, :]
        gram = self.v_crop.conj().T @ self.v_crop
        self._trace_kernel = gram.T * self.p

    def _phases(self, z):
        diff = self.freqs[:, None] - self.freqs[None, :]
        return np.exp(1j * np.multiply.outer(np.asarray(z, float), diff))

    def state(self, z: float) -> np.ndarray:
        core = self.p * self._phases(z)
        return self.v_crop @ core @ self.v_crop.conj().T

    def integrate(self, z, weights) -> np.ndarray:
        """``sum_n weights[n] * state(z[n])``."""
        kern = np.tensordot(np.asarray(weights, float), self._phases(z), axes=(0, 0))
        out = self.v_crop @ (self.p * kern) @ self.v_crop.conj().T
        return 0.5 * (out + out.conj().T)

    def traces(self, z) -> np.ndarray:
        ph = self._phases(z)
        return np.real(np.einsum("ij,nij->n", self._trace_kernel, ph))


def hermite_functions(nmax: int, z) -> np.ndarray:
    """Rows ``psi_0 .. psi_nmax`` evaluated at ``z`` (``|psi_0|^2`` is N(0, 1))."""
    z = np.asarray(z, dtype=float)
    out = np.empty((nmax + 1,) + z.shape)
    out[0] = (2 * math.pi) ** -0.25 * np.exp(-0.25 * z * z)
    if nmax >= 1:
        out[1] = z * out[0]
    for n in range(1, nmax):
        out[n + 1] = (z * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def quadrature_wavefunction(n: int, z):
    """Position-space Fock wavefunction ``<z|n>`` in shot-noise units."""
    if n < 0:
        raise ValidationError("Fock index must be non-negative")
    return hermite_functions(n, z)[n]


def _support_cutoff(d_f: int) -> float:
    # psi_n for n < d_F is below 1e-20 beyond this point
    return 2.0 * math.sqrt(d_f + 0.5) + 12.0


def overlap_integrals(z_lo: float, z_hi: float, d_f: int, tol: float = 1e-10) -> np.ndarray:
    """Real matrix ``int_{z_lo}^{z_hi} psi_m psi_n dz`` for ``m, n < d_F``."""
    if not z_lo < z_hi:
        raise ValidationError("interval must satisfy z_lo < z_hi")
    cut = _support_cutoff(d_f)
    lo, hi = max(z_lo, -cut), min(z_hi, cut)
    if hi <= lo:
        return np.zeros((d_f, d_f))

    def integrand(z):
        psi = hermite_functions(d_f - 1, z)
        return np.einsum("mk,nk->kmn", psi, psi)

    out = adaptive_gl(integrand, lo, hi, tol=tol)
    return 0.5 * (out + out.T)


def phase_matrix(theta: float, d_f: int) -> np.ndarray:
    k = np.arange(d_f)
    return np.exp(1j * theta * (k[:, None] - k[None, :]))


def quadrature_interval_povm(theta: float, z_lo: float, z_hi: float, d_f: int) -> PovmElement:
    """Projector of the rotated quadrature ``cos(theta) q + sin(theta) p`` onto ``[z_lo, z_hi)``."""
    m = phase_matrix(theta, d_f) * overlap_integrals(z_lo, z_hi, d_f)
    return PovmElement(m, theta, ("interval", z_lo, z_hi))


def binned_quadrature_povm(theta: float, edges, d_f: int) -> list[PovmElement]:
    """Interior bins between consecutive ``edges`` plus one overflow element.

    The overflow element is ``I`` minus the interior sum so the set is
    complete to machine precision.
    """
    edges = list(edges)
    elems = [quadrature_interval_povm(theta, lo, hi, d_f) for lo, hi in zip(edges[:-1], edges[1:])]
    rest = np.eye(d_f) - sum(e.matrix for e in elems)
    rest = clip_psd(rest)
    elems.append(PovmElement(rest, theta, ("overflow", edges[0], edges[-1])))
    return elems


def expectation(rho: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ op)))
