"""Periodic coarse-graining of homodyne outcomes and the observed assemblage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import fock
from .errors import TruncationError, ValidationError
from .gaussian import QUADRATURE_INDEX, as_covmat, condition_on_quadrature, quadrature_vector
from .quadrature import adaptive_gl, gl_nodes

TAIL_SIGMAS = 8.5  # two-sided Gaussian tail beyond this is < 1e-16
DEFAULT_T_GRID = tuple(float(t) for t in np.round(np.arange(1.0, 8.0 + 1e-9, 0.5), 10))


@dataclass(frozen=True)
class BinningScheme:
    """Bob's periodic bins (per measurement) and Alice's interval bins.

    ``periods`` maps ``'q'``/``'p'`` to ``T_y``; Alice has ``o_a - 1`` equal
    bins on ``alice_range`` and one overflow bin (index ``o_a - 1``).
    """

    periods: dict = field(default_factory=lambda: {"q": 4.0, "p": 4.0})
    o_b: int = 2
    o_a: int = 32
    alice_range: tuple = (-5.0, 5.0)

    def __post_init__(self):
        if self.o_b < 1:
            raise ValidationError("o_B must be positive")
        if self.o_a < 2:
            raise ValidationError("o_A must be at least 2")
        for y, t in self.periods.items():
            if y not in QUADRATURE_INDEX:
                raise ValidationError(f"unknown measurement {y!r}")
            if not t > 0:
                raise ValidationError(f"period for {y} must be positive, got {t}")
        lo, hi = self.alice_range
        if not lo < hi:
            raise ValidationError("alice_range must be increasing")

    @classmethod
    def equal_periods(cls, period: float, o_b: int, o_a: int = 32, alice_range=(-5.0, 5.0)):
        return cls({"q": float(period), "p": float(period)}, o_b, o_a, tuple(alice_range))

    def period(self, y: str) -> float:
        return self.periods[y]

    def bin_width(self, y: str) -> float:
        return self.periods[y] / self.o_b

    def alice_edges(self) -> np.ndarray:
        lo, hi = self.alice_range
        return np.linspace(lo, hi, self.o_a)

    def alice_intervals(self, a: int) -> list[tuple[float, float]]:
        if not 0 <= a < self.o_a:
            raise ValidationError(f"Alice outcome {a} out of range")
        edges = self.alice_edges()
        if a < self.o_a - 1:
            return [(float(edges[a]), float(edges[a + 1]))]
        return [(-math.inf, float(edges[0])), (float(edges[-1]), math.inf)]

    def to_dict(self) -> dict:
        return {"periods": dict(self.periods), "o_b": self.o_b, "o_a": self.o_a,
                "alice_range": list(self.alice_range)}


def periodic_bin(z, period: float, o_b: int):
    """Index ``b`` with ``b*s <= z mod T < (b+1)*s``; vectorized."""
    z = np.asarray(z, dtype=float)
    r = np.mod(z, period)
    r = np.where(r >= period, r - period, r)
    idx = np.floor(r * (o_b / period)).astype(np.int64)
    return np.clip(idx, 0, o_b - 1)


def periodic_mask(z, period: float, o_b: int, b: int):
    return (periodic_bin(z, period, o_b) == b).astype(np.int8)


def periodic_bin_mass(mean, variance: float, period: float, o_b: int, b: int):
    """P(z mod T in bin b) for z ~ N(mean, variance); vectorized over ``mean``."""
    mean = np.asarray(mean, dtype=float)
    sd = math.sqrt(variance)
    s = period / o_b
    lo_z = np.min(mean) - TAIL_SIGMAS * sd
    hi_z = np.max(mean) + TAIL_SIGMAS * sd
    k = np.arange(math.floor(lo_z / period) - 1, math.ceil(hi_z / period) + 1)
    left = k * period + b * s
    right = left + s
    upper = ndtr((right[:, None] - mean.ravel()[None, :]) / sd)
    lower = ndtr((left[:, None] - mean.ravel()[None, :]) / sd)
    return np.sum(upper - lower, axis=0).reshape(mean.shape)


def bob_bin_probability(variance: float, period: float, o_b: int, b: int) -> float:
    if variance <= 0:
        raise ValidationError("variance must be positive")
    if o_b == 1:
        return 1.0
    return float(periodic_bin_mass(0.0, variance, period, o_b, b))


def alice_bob_moments(cm, theta: float, y: str) -> tuple[float, float, float]:
    """(var of Alice's rotated quadrature, covariance with Bob's y, var of Bob's y)."""
    cm = as_covmat(cm)
    u = quadrature_vector(theta)
    k = QUADRATURE_INDEX[y]
    return float(u @ cm.sigma_a @ u), float(u @ cm.corr[:, k]), float(cm.sigma_b[k, k])


def joint_interval_probability(cm, theta: float, intervals, y: str, b: int,
                               period: float, o_b: int, tol: float = 1e-10) -> float:
    """Mass of (Alice's quadrature in ``intervals``) x (Bob's y in periodic bin b)."""
    var_a, cov, var_b = alice_bob_moments(cm, theta, y)
    rho = cov / math.sqrt(var_a * var_b)
    if abs(rho) >= 1 - 1e-12:
        raise ValidationError("degenerate bivariate covariance (|correlation| ~ 1)")
    sd_a = math.sqrt(var_a)
    gain = cov / var_a
    cond_var = var_b - cov * cov / var_a
    cut = TAIL_SIGMAS * sd_a + 1.0

    def integrand(x):
        dens = np.exp(-0.5 * x * x / var_a) / math.sqrt(2 * math.pi * var_a)
        return dens * periodic_bin_mass(gain * x, cond_var, period, o_b, b)

    total = 0.0
    for lo, hi in intervals:
        lo, hi = max(lo, -cut), min(hi, cut)
        if hi <= lo:
            continue
        # split at multiples of sd to keep panels well resolved
        n_pieces = max(1, math.ceil((hi - lo) / sd_a))
        edges = np.linspace(lo, hi, n_pieces + 1)
        for a0, a1 in zip(edges[:-1], edges[1:]):
            total += float(adaptive_gl(integrand, a0, a1, tol=tol / (2 * n_pieces)))
    return total


def joint_bin_probability(cm, theta: float, a: int, y: str, b: int, scheme: BinningScheme) -> float:
    return joint_interval_probability(cm, theta, scheme.alice_intervals(a), y, b,
                                      scheme.period(y), scheme.o_b)


def joint_probability_table(cm, thetas, scheme: BinningScheme) -> np.ndarray:
    """Array ``p[x, a, y, b]`` over Alice's angles and both of Bob's quadratures."""
    ys = ("q", "p")
    out = np.empty((len(thetas), scheme.o_a, 2, scheme.o_b))
    for xi, th in enumerate(thetas):
        for a in range(scheme.o_a):
            for yi, y in enumerate(ys):
                for b in range(scheme.o_b):
                    out[xi, a, yi, b] = joint_bin_probability(cm, th, a, y, b, scheme)
    return out


def bin_segments(period: float, o_b: int, b: int, z_max: float):
    """Pieces of bin ``b`` (all periods) intersected with ``[-z_max, z_max]``."""
    s = period / o_b
    segs = []
    for k in range(math.floor(-z_max / period) - 1, math.ceil(z_max / period) + 1):
        lo = max(k * period + b * s, -z_max)
        hi = min(k * period + (b + 1) * s, z_max)
        if hi > lo:
            segs.append((lo, hi))
    return segs


@dataclass(frozen=True)
class AssemblageConfig:
    tail_mass: float = 1e-10
    nodes_per_segment: int = 32
    max_panel_sd: float = 0.5  # longer segments are split into panels of this many sd
    deficit_tol: float = 1e-6
    pointwise_deficit_tol: float = 1e-2
    core_tail_mass: float = 1e-6  # pointwise check only where |z| is inside this two-sided quantile


def conditional_assemblage(cm, y: str, scheme: BinningScheme, d_f: int,
                           config: AssemblageConfig = AssemblageConfig()) -> list[fock.FockState]:
    """Alice's sub-normalized conditional states, one per Bob outcome of ``y``."""
    cm = as_covmat(cm)
    cond = condition_on_quadrature(cm, y)
    sd = math.sqrt(cond.outcome_variance)
    z_max = sd * float(ndtri(1.0 - 0.5 * config.tail_mass))
    z_core = sd * float(ndtri(1.0 - 0.5 * config.core_tail_mass))
    family = fock.DisplacedFamily(cond.cm, cond.mean_slope, d_f, z_max)
    period, o_b = scheme.period(y), scheme.o_b
    out = []
    for b in range(o_b):
        zs, ws = [], []
        for lo, hi in bin_segments(period, o_b, b, z_max):
            pieces = max(1, math.ceil((hi - lo) / (config.max_panel_sd * sd)))
            edges = np.linspace(lo, hi, pieces + 1)
            for a0, a1 in zip(edges[:-1], edges[1:]):
                z, w = gl_nodes(a0, a1, config.nodes_per_segment)
                zs.append(z)
                ws.append(w)
        if zs:
            z = np.concatenate(zs)
            dens = np.exp(-0.5 * z * z / cond.outcome_variance) / (sd * math.sqrt(2 * math.pi))
            weights = np.concatenate(ws) * dens
            core = np.abs(z) <= z_core
            if np.any(core):
                point_deficit = float(np.max(1.0 - family.traces(z[core])))
                if point_deficit > config.pointwise_deficit_tol:
                    raise TruncationError(
                        f"conditional state truncation deficit {point_deficit:.2e} "
                        f"at |z| <= {z_core:.2f}; increase d_F above {d_f}")
            mat = family.integrate(z, weights)
            mass = float(np.sum(weights))
        else:
            mat = np.zeros((d_f, d_f), dtype=complex)
            mass = 0.0
        tr = float(np.real(np.trace(mat)))
        out.append(fock.FockState(fock.clip_psd(mat) if tr > 0 else mat, tr, max(0.0, mass - tr)))
    deficit = sum(s.truncation_deficit for s in out)
    if deficit > config.deficit_tol:
        raise TruncationError(
            f"assemblage truncation deficit {deficit:.2e} exceeds {config.deficit_tol:g}; "
            f"increase d_F above {d_f}")
    return out


def reduced_state_fock(cm, d_f: int) -> fock.FockState:
    """Alice's reduced state (no conditioning) in Fock form."""
    cm = as_covmat(cm)
    return fock.gaussian_to_fock(cm.sigma_a, np.zeros(2), d_f)
