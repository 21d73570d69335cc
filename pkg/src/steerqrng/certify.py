"""Guessing-probability programs for steering-based randomness.

Two variants are supported:

* ``full-assemblage``: Eve's decomposition must reproduce every conditional
  state of Alice exactly.
* ``joint-probability``: it only has to reproduce the joint statistics of a
  few binned quadrature measurements on Alice's side.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import coarse, fock
from .errors import NumericalError, ValidationError
from .gaussian import as_covmat
from .sdp import Block, Constraint, SdpProblem, SolverOptions, solve_sdp

log = logging.getLogger(__name__)

MEASUREMENTS = ("q", "p")
FULL = "full-assemblage"
JOINT = "joint-probability"
VARIANTS = (FULL, JOINT)

# Alice's four homodyne directions: p, (p+q)/sqrt2, (p-q)/sqrt2 (up to sign), q
ALICE_ANGLES = (math.pi / 2, math.pi / 4, -math.pi / 4, 0.0)
CERTIFIED_GAP = 1e-6
CERTIFIED_RESIDUAL = 1e-6  # same scale as the certified gap
DEFAULT_MIXING = 1e-8
# tried in order; thin feasible sets (pure observed states) need the larger weights
MIXING_LADDER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass
class Assemblage:
    """Map ``(y, b) -> sub-normalized state`` for Bob's two measurements."""

    states: dict
    o_b: int

    def __post_init__(self):
        dims = {np.asarray(m).shape for m in self.states.values()}
        if len(dims) != 1:
            raise ValidationError("assemblage states have inconsistent shapes")
        for y in MEASUREMENTS:
            for b in range(self.o_b):
                if (y, b) not in self.states:
                    raise ValidationError(f"assemblage is missing sigma_{{{b}|{y}}}")

    @property
    def dim(self) -> int:
        return next(iter(self.states.values())).shape[0]

    def marginal(self, y: str) -> np.ndarray:
        return sum(np.asarray(self.states[(y, b)]) for b in range(self.o_b))

    def signaling_defect(self) -> float:
        diff = self.marginal("q") - self.marginal("p")
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))

    def validate(self, norm_tol: float = 1e-6, ns_tol: float = 1e-5) -> None:
        for y in MEASUREMENTS:
            tr = float(np.real(np.trace(self.marginal(y))))
            if abs(tr - 1.0) > norm_tol:
                raise ValidationError(f"assemblage for {y} has total trace {tr:.9f}")
        for key, m in self.states.items():
            m = np.asarray(m)
            if np.max(np.abs(m - m.conj().T)) > 1e-10:
                raise ValidationError(f"state {key} is not Hermitian")
            if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -1e-8:
                raise ValidationError(f"state {key} is not positive semidefinite")
        if self.signaling_defect() > ns_tol:
            raise ValidationError(
                f"assemblage violates no-signaling by {self.signaling_defect():.2e}")

    def no_signaling_projection(self) -> "Assemblage":
        """Shift each state so both marginals agree exactly.

        The marginals are moved to their average; the correction is of the
        size of the quadrature error and keeps the equality constraints
        consistent with the no-signaling ones.
        """
        target = 0.5 * (self.marginal("q") + self.marginal("p"))
        out = {}
        for y in MEASUREMENTS:
            shift = (target - self.marginal(y)) / self.o_b
            for b in range(self.o_b):
                m = np.asarray(self.states[(y, b)]) + shift
                out[(y, b)] = 0.5 * (m + m.conj().T)
        return Assemblage(out, self.o_b)

    @classmethod
    def from_gaussian(cls, cm, scheme: coarse.BinningScheme, d_f: int,
                      config: coarse.AssemblageConfig = coarse.AssemblageConfig()) -> "Assemblage":
        states = {}
        for y in MEASUREMENTS:
            for b, st in enumerate(coarse.conditional_assemblage(cm, y, scheme, d_f, config)):
                states[(y, b)] = st.matrix
        return cls(states, scheme.o_b)


def qubit_mub_assemblage() -> Assemblage:
    """Maximally entangled two-qubit state, Bob measuring Z ('q') and X ('p')."""
    zero = np.array([[1.0, 0.0], [0.0, 0.0]])
    one = np.array([[0.0, 0.0], [0.0, 1.0]])
    plus = 0.5 * np.ones((2, 2))
    minus = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    # for |Phi+>, sigma_{b|y} = Pi_{b|y}^T / 2
    states = {("q", 0): 0.5 * zero.T, ("q", 1): 0.5 * one.T,
              ("p", 0): 0.5 * plus.T, ("p", 1): 0.5 * minus.T}
    return Assemblage({k: v.astype(complex) for k, v in states.items()}, 2)


def product_assemblage(rho: np.ndarray, probs_q, probs_p) -> Assemblage:
    """Unsteerable assemblage ``sigma_{b|y} = p(b|y) rho``."""
    states = {}
    for y, probs in (("q", probs_q), ("p", probs_p)):
        for b, pb in enumerate(probs):
            states[(y, b)] = pb * np.asarray(rho, dtype=complex)
    return Assemblage(states, len(probs_q))


@lru_cache(maxsize=32)
def hermitian_basis(d: int) -> tuple:
    """Hilbert-Schmidt orthonormal basis of d x d Hermitian matrices."""
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    r = 1 / math.sqrt(2)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = r
            basis.append(e)
            f = np.zeros((d, d), dtype=complex)
            f[i, j], f[j, i] = -1j * r, 1j * r
            basis.append(f)
    for m in basis:
        m.setflags(write=False)
    return tuple(basis)


def _coords(m: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix in :func:`hermitian_basis`."""
    return np.array([float(np.real(np.vdot(e, m))) for e in hermitian_basis(m.shape[0])])


class _Layout:
    """Block indices of Eve's variables ``sigma^e_{b|y}``."""

    def __init__(self, o_b, d):
        self.o_b, self.d = o_b, d
        self.keys = [(e, y, b) for e in range(o_b) for y in MEASUREMENTS for b in range(o_b)]
        self.index = {k: i for i, k in enumerate(self.keys)}

    def blocks(self):
        return [Block(("sigma", e, y, b), self.d) for e, y, b in self.keys]

    def objective(self, y_star):
        return {self.index[(e, y_star, e)]: np.eye(self.d) for e in range(self.o_b)}

    def no_signaling(self):
        cons = []
        for e in range(self.o_b):
            for basis_el in hermitian_basis(self.d):
                terms = {self.index[(e, "q", b)]: basis_el for b in range(self.o_b)}
                terms.update({self.index[(e, "p", b)]: -basis_el for b in range(self.o_b)})
                cons.append(Constraint(terms, 0.0, f"no_signaling[e={e}]"))
        return cons


def _check_y_star(y_star):
    if y_star not in MEASUREMENTS:
        raise ValidationError(f"y_star must be one of {MEASUREMENTS}, got {y_star!r}")


def mix_with_noise(asm: Assemblage, kappa: float) -> Assemblage:
    """``(1 - kappa) sigma_{b|y} + kappa I / (d o_B)``.

    The added assemblage has a local-hidden-state model, so its guessing
    probability is 1 and concavity gives
    ``P_g(sigma) <= (P_g(mixed) - kappa) / (1 - kappa)``. The mixture is
    full rank, which gives the program a strictly feasible point.
    """
    if not 0 <= kappa < 1:
        raise ValidationError("mixing weight must lie in [0, 1)")
    noise = np.eye(asm.dim) / (asm.dim * asm.o_b)
    return Assemblage({k: (1 - kappa) * np.asarray(m) + kappa * noise for k, m in asm.states.items()},
                      asm.o_b)


def unmix(value: float, kappa: float) -> float:
    return (value - kappa) / (1.0 - kappa)


def _assemblage_constraints(asm: Assemblage, lay: _Layout):
    cons = []
    for y in MEASUREMENTS:
        for b in range(asm.o_b):
            target = np.asarray(asm.states[(y, b)])
            for basis_el, rhs in zip(hermitian_basis(asm.dim), _coords(target)):
                terms = {lay.index[(e, y, b)]: basis_el for e in range(asm.o_b)}
                cons.append(Constraint(terms, rhs, f"assemblage[y={y},b={b}]"))
    return cons


def build_assemblage_program(assemblage: Assemblage, y_star: str = "q",
                             mixing: float = DEFAULT_MIXING) -> SdpProblem:
    """Guessing-probability program constrained by the full assemblage.

    The assemblage is first mixed with weight ``mixing`` of white noise (see
    :func:`mix_with_noise`); ``meta["mixing"]`` records the weight so the
    solved values can be mapped back to bounds for the original input.
    """
    _check_y_star(y_star)
    assemblage.validate()
    asm = mix_with_noise(assemblage.no_signaling_projection(), mixing)
    lay = _Layout(asm.o_b, asm.dim)
    cons = _assemblage_constraints(asm, lay) + lay.no_signaling()
    trace_bound = sum(float(np.real(np.trace(m))) for m in asm.states.values())
    return SdpProblem(lay.blocks(), lay.objective(y_star), cons, trace_bound=trace_bound,
                      meta={"mixing": mixing})


def alice_povms(scheme: coarse.BinningScheme, d_f: int, angles=ALICE_ANGLES) -> list:
    """``povms[x][a]`` for Alice's binned homodyne directions."""
    edges = scheme.alice_edges()
    return [[el.matrix for el in fock.binned_quadrature_povm(th, edges, d_f)] for th in angles]


def build_probability_program(p_obs: np.ndarray, povms, y_star: str = "q", d_f: int | None = None,
                              tolerance: float = 2e-6, mixing: float = DEFAULT_MIXING) -> SdpProblem:
    """Guessing-probability program constrained by joint statistics ``p_obs[x, a, y, b]``.

    Each statistic is matched to within ``tolerance`` (two slack variables
    per entry), which absorbs the Fock truncation of Alice's POVMs. Loosening
    constraints only enlarges Eve's feasible set. The statistics are first
    mixed with those of the white-noise assemblage, as in
    :func:`mix_with_noise`.
    """
    _check_y_star(y_star)
    p_obs = np.asarray(p_obs, dtype=float)
    n_x, o_a, n_y, o_b = p_obs.shape
    if n_y != 2 or len(povms) != n_x or any(len(row) != o_a for row in povms):
        raise ValidationError("p_obs shape does not match the POVM list")
    norms = p_obs.sum(axis=(1, 3))
    if np.max(np.abs(norms - 1.0)) > 1e-6:
        raise ValidationError(f"p_obs rows are not normalized (max error {np.max(np.abs(norms - 1)):.2e})")
    d = d_f if d_f is not None else np.asarray(povms[0][0]).shape[0]
    if tolerance <= 0:
        raise ValidationError("tolerance must be positive")
    if not 0 <= mixing < 1:
        raise ValidationError("mixing weight must lie in [0, 1)")
    noise = np.array([[np.real(np.trace(np.asarray(m))) / (d * o_b) for m in row] for row in povms])
    p_obs = (1 - mixing) * p_obs + mixing * noise[:, :, None, None]
    lay = _Layout(o_b, d)
    blocks = lay.blocks()
    n_stat = n_x * o_a * n_y * o_b
    slack_idx = len(blocks)
    # slack is measured in units of the tolerance to keep the box O(1)
    blocks.append(Block("slack", 2 * n_stat, "nonneg"))
    cons = []
    i = 0
    for x in range(n_x):
        for a in range(o_a):
            m = np.asarray(povms[x][a])
            for yi, y in enumerate(MEASUREMENTS):
                for b in range(o_b):
                    terms = {lay.index[(e, y, b)]: m for e in range(o_b)}
                    u = np.zeros(2 * n_stat)
                    u[2 * i] = tolerance
                    cons.append(Constraint({**terms, slack_idx: u},
                                           p_obs[x, a, yi, b] + tolerance,
                                           f"statistics[x={x},y={y}]"))
                    w = np.zeros(2 * n_stat)
                    w[2 * i] = w[2 * i + 1] = 1.0
                    cons.append(Constraint({slack_idx: w}, 2.0, "statistics_box"))
                    i += 1
    # Alice's POVMs sum to I, so the data fix Eve's total weight exactly
    eye = np.eye(d)
    for y in MEASUREMENTS:
        terms = {lay.index[(e, y, b)]: eye for e in range(o_b) for b in range(o_b)}
        cons.append(Constraint(terms, 1.0, "normalization"))
    cons.extend(lay.no_signaling())
    trace_bound = 2.0 + 2.0 * n_stat
    return SdpProblem(blocks, lay.objective(y_star), cons, trace_bound=trace_bound,
                      meta={"mixing": mixing})


def min_entropy(p_guess: float) -> float:
    if not p_guess > 0 or p_guess > 1 + 1e-6:
        raise ValidationError(f"guessing probability must lie in (0, 1], got {p_guess}")
    return max(0.0, -math.log2(min(p_guess, 1.0)))


@dataclass
class CertificationResult:
    p_guess_primal: float
    p_guess_dual: float
    h_min: float
    variant: str
    y_star: str
    scheme: dict
    d_f: int
    solver_status: str
    gap: float
    certified: bool
    iterations: int = 0
    tolerances: dict = field(default_factory=dict)
    primal_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "p_guess_primal": self.p_guess_primal,
            "p_guess_dual": self.p_guess_dual,
            "h_min": self.h_min,
            "variant": self.variant,
            "y_star": self.y_star,
            "scheme": self.scheme,
            "d_f": self.d_f,
            "solver_status": self.solver_status,
            "gap": self.gap,
            "certified": self.certified,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "tolerances": self.tolerances,
        }


def solve_guessing_program(problem: SdpProblem, variant: str, y_star: str, scheme: dict, d_f: int,
                           options: SolverOptions | None = None) -> CertificationResult:
    opts = options or SolverOptions()
    sol = solve_sdp(problem, options=opts)
    if sol.status == "infeasible":
        raise NumericalError("guessing-probability program reported infeasible")
    kappa = problem.meta.get("mixing", 0.0)
    p_primal, p_dual = unmix(sol.primal_value, kappa), unmix(sol.dual_value, kappa)
    penalty = sol.dual_penalty
    gap = p_dual - p_primal
    # The dual value is a valid upper bound for any multipliers (the penalty
    # covers dual infeasibility), so a stalled run or a slightly infeasible
    # primal overshooting it does not weaken the bound; the gap only measures
    # how tight it is.
    usable = sol.status == "optimal" or (
        sol.status == "stalled" and sol.primal_residual <= CERTIFIED_RESIDUAL)
    certified = usable and abs(gap) <= CERTIFIED_GAP
    # a guessing probability never exceeds 1, so larger bounds carry no entropy
    h = min_entropy(min(p_dual, 1.0)) if p_dual > 0 else 0.0
    return CertificationResult(
        p_guess_primal=p_primal, p_guess_dual=p_dual, h_min=h,
        variant=variant, y_star=y_star, scheme=scheme, d_f=d_f,
        solver_status=sol.status, gap=gap, certified=certified,
        iterations=sol.iterations, primal_residual=sol.primal_residual,
        tolerances={"gap_tol": opts.tol, "feas_tol": opts.feas_tol,
                    "certified_gap": CERTIFIED_GAP, "dual_penalty": penalty,
                    "mixing": kappa},
    )


def _certify_ladder(build, variant: str, y_star: str, scheme: dict, d_f: int,
                    options) -> CertificationResult:
    """Solve ``build(kappa)`` for increasing mixing weights until certified."""
    last, err = None, None
    for kappa in MIXING_LADDER:
        try:
            res = solve_guessing_program(build(kappa), variant, y_star, scheme, d_f, options)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            log.info("mixing %g failed: %s", kappa, exc)
            err = exc
            continue
        if res.certified:
            return res
        log.info("mixing %g not certified (status %s, gap %.2e, residual %.2e)",
                 kappa, res.solver_status, res.gap, res.primal_residual)
        last = res
    if last is None:
        raise NumericalError(f"guessing-probability program failed at every mixing weight: {err}")
    return last


def _certify_full(asm: Assemblage, y_star: str, scheme: dict, options) -> CertificationResult:
    return _certify_ladder(lambda k: build_assemblage_program(asm, y_star, k), FULL,
                           y_star, scheme, asm.dim, options)


def certify_assemblage(assemblage: Assemblage, y_star: str = "q",
                       options: SolverOptions | None = None) -> CertificationResult:
    return _certify_full(assemblage, y_star, {"o_b": assemblage.o_b}, options)


def certify_cm(cm, scheme: coarse.BinningScheme, d_f: int, variant: str = FULL, y_star: str = "q",
               options: SolverOptions | None = None,
               asm_config: coarse.AssemblageConfig = coarse.AssemblageConfig()) -> CertificationResult:
    """Certify the min-entropy of Bob's ``y_star`` outcomes for a Gaussian CM."""
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}")
    cm = as_covmat(cm)
    asm = Assemblage.from_gaussian(cm, scheme, d_f, asm_config)
    if variant == FULL:
        return _certify_full(asm, y_star, scheme.to_dict(), options)
    else:
        povms = alice_povms(scheme, d_f)
        p_obs = coarse.joint_probability_table(cm, ALICE_ANGLES, scheme)
        model = np.array([[[[np.real(np.trace(povms[x][a] @ asm.states[(y, b)]))
                             for b in range(scheme.o_b)] for y in MEASUREMENTS]
                           for a in range(scheme.o_a)] for x in range(len(ALICE_ANGLES))])
        mismatch = float(np.max(np.abs(model - p_obs)))
        if mismatch > 2e-6:
            raise ValidationError(
                f"Fock model and Gaussian statistics disagree by {mismatch:.2e}; increase d_F")
        tol = max(1e-9, 2.0 * mismatch)
        return _certify_ladder(
            lambda k: build_probability_program(p_obs, povms, y_star, d_f, tolerance=tol, mixing=k),
            variant, y_star, scheme.to_dict(), d_f, options)


def optimize_period(cm, o_b: int, d_f: int, t_grid=coarse.DEFAULT_T_GRID, variant: str = FULL,
                    y_star: str = "q", o_a: int = 32, alice_range=(-5.0, 5.0),
                    options: SolverOptions | None = None):
    """Scan equal periods ``T_q = T_p`` and keep the one maximizing ``h_min``.

    Returns ``(T_best, result, per_period)``; ties go to the smaller period.
    """
    grid = sorted(float(t) for t in t_grid)
    if not grid:
        raise ValidationError("T grid is empty")
    best_t, best, scan = None, None, []
    for t in grid:
        scheme = coarse.BinningScheme.equal_periods(t, o_b, o_a, alice_range)
        res = certify_cm(cm, scheme, d_f, variant, y_star, options)
        scan.append((t, res))
        if best is None or res.h_min > best.h_min:
            best_t, best = t, res
    return best_t, best, scan
