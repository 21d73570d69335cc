"""Dense primal-dual interior-point solver for block semidefinite programs.

Problems are stated as::

    maximize    sum_k <C_k, X_k>
    subject to  sum_k <A_ik, X_k> = b_i      for every constraint i
                X_k >= 0                     (Hermitian PSD, or a nonneg vector)

Complex Hermitian blocks are mapped to real symmetric blocks of twice the
size. The iteration is an infeasible-start path-following method with
Nesterov-Todd scaling and (optionally) Mehrotra's predictor-corrector.
"""

from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import ValidationError

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max-iter"
STALLED = "stalled"  # no further progress possible; best iterate returned
STALL_WINDOW = 6


@dataclass(frozen=True)
class Block:
    id: object
    dim: int
    kind: str = "psd"  # "psd" (Hermitian matrix) or "nonneg" (vector)


@dataclass
class Constraint:
    """``sum_k <terms[k], X_k> = rhs``; nonneg blocks take 1-d coefficient vectors."""

    terms: dict
    rhs: float
    group: str = ""


@dataclass
class SdpProblem:
    blocks: list
    objective: dict
    constraints: list
    trace_bound: float | None = None  # bound on sum_k Tr X_k over the feasible set
    sense: str = "maximize"
    meta: dict = field(default_factory=dict, repr=False, compare=False)  # not serialized

    def __post_init__(self):
        if self.sense != "maximize":
            raise ValidationError("only maximization problems are supported")
        if not self.constraints:
            raise ValidationError("at least one constraint is required")
        n = len(self.blocks)
        for k, c in self.objective.items():
            self._check_coeff(k, c, n)
        for con in self.constraints:
            for k, c in con.terms.items():
                self._check_coeff(k, c, n)

    def _check_coeff(self, k, c, n):
        if not 0 <= k < n:
            raise ValidationError(f"block index {k} out of range")
        blk = self.blocks[k]
        c = np.asarray(c)
        if blk.kind == "nonneg":
            if c.shape != (blk.dim,):
                raise ValidationError(f"block {blk.id}: expected vector of length {blk.dim}")
            if np.iscomplexobj(c) and np.any(np.imag(c) != 0):
                raise ValidationError(f"block {blk.id}: nonneg coefficients must be real")
        else:
            if c.shape != (blk.dim, blk.dim):
                raise ValidationError(f"block {blk.id}: expected {blk.dim}x{blk.dim} matrix")
            if np.max(np.abs(c - c.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(c))):
                raise ValidationError(f"block {blk.id}: coefficient matrix is not Hermitian")

    @property
    def groups(self) -> dict:
        counts: dict = {}
        for con in self.constraints:
            counts[con.group] = counts.get(con.group, 0) + 1
        return counts


@dataclass
class SdpSolution:
    primal_value: float
    dual_value: float
    blocks: list
    multipliers: np.ndarray
    dual_slack: list
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    dual_penalty: float = 0.0
    dropped_constraints: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.dual_value - self.primal_value


@dataclass
class SolverOptions:
    tol: float = 1e-8           # relative duality gap
    feas_tol: float = 1e-9      # relative primal/dual infeasibility
    max_iter: int = 200
    step_fraction: float = 0.98
    mehrotra: bool = True
    presolve_tol: float = 1e-10


# -- real embedding ---------------------------------------------------------

def embed(h: np.ndarray) -> np.ndarray:
    re, im = np.real(h), np.imag(h)
    return np.block([[re, -im], [im, re]])


def unembed(x: np.ndarray) -> np.ndarray:
    d = x.shape[0] // 2
    re = 0.5 * (x[:d, :d] + x[d:, d:])
    im = 0.5 * (x[d:, :d] - x[:d, d:])
    return re + 1j * im


class _PsdBlock:
    def __init__(self, dim, is_complex):
        self.is_complex = is_complex
        self.n = 2 * dim if is_complex else dim
        self.scale = 0.5 if is_complex else 1.0

    def lift(self, c):
        c = np.asarray(c)
        if self.is_complex:
            return self.scale * embed(c)
        return np.real(c).astype(float)

    def lower(self, x):
        return unembed(x) if self.is_complex else x.copy()


def _sym(a):
    return 0.5 * (a + a.T)


def _factor(x):
    """Some ``F`` with ``x = F F^T`` (Cholesky, with an eigen fallback)."""
    try:
        return np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        w, q = np.linalg.eigh(_sym(x))
        w = np.clip(w, 1e-300, None)
        return q * np.sqrt(w)


def _max_step_psd(f_inv, dx):
    m = _sym(f_inv @ dx @ f_inv.T)
    if not np.all(np.isfinite(m)):
        return 0.0
    lam = np.linalg.eigvalsh(m)[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


class _Compiled:
    """Real-valued, block-gathered form of an :class:`SdpProblem`."""

    def __init__(self, problem: SdpProblem):
        self.problem = problem
        self.m = len(problem.constraints)
        self.b = np.array([float(np.real(c.rhs)) for c in problem.constraints])
        self.kinds, self.info, self.rows, self.coef, self.obj = [], [], [], [], []
        per_block = [[] for _ in problem.blocks]
        for i, con in enumerate(problem.constraints):
            for k, c in con.terms.items():
                per_block[k].append((i, c))
        for k, blk in enumerate(problem.blocks):
            entries = per_block[k]
            if blk.kind == "nonneg":
                self.kinds.append("lp")
                self.info.append(None)
                n = blk.dim
                co = np.array([np.real(c) for _, c in entries]).reshape(len(entries), n)
                c_obj = np.real(np.asarray(problem.objective.get(k, np.zeros(n)), float))
            else:
                cplx = any(np.iscomplexobj(c) and np.any(np.imag(c) != 0) for _, c in entries)
                c0 = problem.objective.get(k)
                if c0 is not None and np.iscomplexobj(c0) and np.any(np.imag(c0) != 0):
                    cplx = True
                pb = _PsdBlock(blk.dim, cplx)
                self.kinds.append("psd")
                self.info.append(pb)
                n = pb.n
                co = np.array([pb.lift(c) for _, c in entries]).reshape(len(entries), n, n)
                c_obj = pb.lift(c0) if c0 is not None else np.zeros((n, n))
            self.rows.append(np.array([i for i, _ in entries], dtype=np.int64))
            self.coef.append(co)
            # internal form minimizes <C, X>
            self.obj.append(-c_obj)

    def apply(self, xs):
        out = np.zeros(self.m)
        for kind, rows, co, x in zip(self.kinds, self.rows, self.coef, xs):
            if not len(rows):
                continue
            if kind == "lp":
                out[rows] += co @ x
            else:
                out[rows] += co.reshape(len(rows), -1) @ x.ravel()
        return out

    def adjoint(self, y):
        outs = []
        for kind, rows, co, c in zip(self.kinds, self.rows, self.coef, self.obj):
            if not len(rows):
                outs.append(np.zeros_like(c))
            elif kind == "lp":
                outs.append(y[rows] @ co)
            else:
                outs.append(np.tensordot(y[rows], co, axes=(0, 0)))
        return outs

    def schur(self, scalings):
        m = np.zeros((self.m, self.m))
        for kind, rows, co, w in zip(self.kinds, self.rows, self.coef, scalings):
            if not len(rows):
                continue
            if kind == "lp":
                blk = (co * w) @ co.T
            else:
                g = np.matmul(w, np.matmul(co, w))
                blk = co.reshape(len(rows), -1) @ g.reshape(len(rows), -1).T
            m[np.ix_(rows, rows)] += blk
        return m

    def restrict(self, keep):
        """Drop constraints not in ``keep`` (sorted indices)."""
        remap = -np.ones(self.m, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        for k in range(len(self.rows)):
            mask = remap[self.rows[k]] >= 0
            self.rows[k] = remap[self.rows[k][mask]]
            self.coef[k] = self.coef[k][mask]
        self.b = self.b[keep]
        self.m = len(keep)


def _inner(a, b):
    return float(np.sum(a * b))


def _presolve(comp: _Compiled, tol: float):
    """Remove linearly dependent equality rows; report inconsistency."""
    ident = [np.ones(o.shape[0]) if k == "lp" else np.eye(o.shape[0])
             for k, o in zip(comp.kinds, comp.obj)]
    gram = comp.schur(ident)
    scale = float(np.max(np.diag(gram))) if comp.m else 1.0
    if scale <= 0:
        raise ValidationError("all constraints are identically zero")
    _, piv, rank, _ = sla.lapack.dpstrf(gram.copy(), lower=1, tol=tol * scale)
    order = piv - 1
    keep = np.sort(order[:rank])
    dropped = np.sort(order[rank:])
    inconsistency = 0.0
    if len(dropped):
        gkk = gram[np.ix_(keep, keep)]
        coeffs = sla.solve(gkk, gram[np.ix_(keep, dropped)], assume_a="pos")
        resid = comp.b[dropped] - coeffs.T @ comp.b[keep]
        inconsistency = float(np.max(np.abs(resid)))
    return keep, dropped, inconsistency


def _initial_point(comp: _Compiled):
    xs, ss = [], []
    b_abs = np.abs(comp.b)
    for kind, rows, co, c in zip(comp.kinds, comp.rows, comp.coef, comp.obj):
        n = c.shape[0]
        norms = (np.linalg.norm(co.reshape(len(rows), -1), axis=1) if len(rows)
                 else np.zeros(0))
        xi = max(10.0, math.sqrt(n),
                 n * float(np.max((1 + b_abs[rows]) / (1 + norms), initial=0.0)))
        eta = max(10.0, math.sqrt(n), float(np.max(norms, initial=0.0)),
                  float(np.linalg.norm(c)))
        if kind == "lp":
            xs.append(np.full(n, xi))
            ss.append(np.full(n, eta))
        else:
            xs.append(xi * np.eye(n))
            ss.append(eta * np.eye(n))
    return xs, ss


class _Scaling:
    """Nesterov-Todd scaling for one block."""

    def __init__(self, kind, x, s):
        self.kind = kind
        if kind == "lp":
            self.w = x / s
            self.lam = np.sqrt(x * s)
            self.x, self.s = x, s
            return
        fx = _factor(x)
        fs = _factor(s)
        u, lam, vt = np.linalg.svd(fs.T @ fx)
        lam = np.maximum(lam, 1e-300)
        self.lam = lam
        self.g = fx @ vt.T / np.sqrt(lam)
        self.g_inv = (np.sqrt(lam)[:, None] * vt) @ np.linalg.inv(fx)
        self.w = _sym(self.g @ self.g.T)
        self.fx_inv = np.linalg.inv(fx)
        self.fs_inv = np.linalg.inv(fs)

    def complementarity_rhs(self, target_mu, corr=None):
        """``R_c`` such that ``dX + W dS W = R_c`` realizes the centering target."""
        lam = self.lam
        if self.kind == "lp":
            t = target_mu - lam * lam
            if corr is not None:
                t = t - corr
            return t / self.s
        t = np.diag(target_mu - lam * lam)
        if corr is not None:
            t = t - corr
        h = 2.0 * t / (lam[:, None] + lam[None, :])
        return _sym(self.g @ h @ self.g.T)

    def second_order(self, dx, ds):
        if self.kind == "lp":
            return dx * ds
        a = self.g_inv @ dx @ self.g_inv.T
        b = self.g.T @ ds @ self.g
        return 0.5 * (a @ b + b @ a)

    def apply_w(self, ds):
        if self.kind == "lp":
            return self.w * ds
        return _sym(self.w @ ds @ self.w)

    def max_steps(self, dx, ds):
        if self.kind == "lp":
            return _max_step_lp(self.x, dx), _max_step_lp(self.s, ds)
        return _max_step_psd(self.fx_inv, dx), _max_step_psd(self.fs_inv, ds)


class _SchurSolver:
    def __init__(self, m):
        self.m = m
        try:
            self.fac = sla.cho_factor(m, lower=True, check_finite=False)
            self.kind = "chol"
        except sla.LinAlgError:
            reg = 1e-13 * max(1.0, float(np.max(np.abs(np.diag(m)))))
            try:
                self.fac = sla.cho_factor(m + reg * np.eye(len(m)), lower=True, check_finite=False)
                self.kind = "chol"
            except sla.LinAlgError:
                self.fac = sla.lu_factor(m, check_finite=False)
                self.kind = "lu"

    def _solve(self, rhs):
        if self.kind == "chol":
            return sla.cho_solve(self.fac, rhs, check_finite=False)
        return sla.lu_solve(self.fac, rhs, check_finite=False)

    def solve(self, rhs, refine: int = 2):
        """Factor solve plus a few rounds of iterative refinement."""
        x = self._solve(rhs)
        for _ in range(refine):
            x = x + self._solve(rhs - self.m @ x)
        return x


def solve_sdp(problem: SdpProblem, tol: float | None = None, max_iter: int | None = None,
              options: SolverOptions | None = None) -> SdpSolution:
    """Solve ``problem``; the returned ``dual_value`` upper-bounds the optimum."""
    # overflowing iterates are detected and discarded in the loop
    with np.errstate(over="ignore", invalid="ignore"):
        return _solve(problem, tol, max_iter, options)


def _solve(problem, tol, max_iter, options):
    opts = options or SolverOptions()
    if tol is not None:
        opts = SolverOptions(**{**opts.__dict__, "tol": tol})
    if max_iter is not None:
        opts = SolverOptions(**{**opts.__dict__, "max_iter": max_iter})

    comp = _Compiled(problem)
    m_full = comp.m
    keep, dropped, inconsistency = _presolve(comp, opts.presolve_tol)
    b_norm = 1.0 + float(np.linalg.norm(comp.b))
    if inconsistency > opts.feas_tol * b_norm * 10:
        log.info("presolve: dependent constraints are inconsistent (%.2e)", inconsistency)
        return _infeasible_solution(problem, comp, m_full, dropped, 0)
    if len(dropped):
        comp.restrict(keep)
        log.debug("presolve dropped %d dependent constraints", len(dropped))

    c_norm = 1.0 + math.sqrt(sum(_inner(c, c) for c in comp.obj))
    xs, ss = _initial_point(comp)
    y = np.zeros(comp.m)
    n_bar = sum(o.shape[0] for o in comp.obj)
    status = MAX_ITER
    it = 0
    stalled = 0
    flat = 0  # iterations since the score last improved by 1%
    best = None  # (score, xs, ss, y) of the iterate closest to the stopping criteria
    for it in range(1, opts.max_iter + 1):
        r_p = comp.b - comp.apply(xs)
        aty = comp.adjoint(y)
        r_d = [c - s - a for c, s, a in zip(comp.obj, ss, aty)]
        pobj = sum(_inner(c, x) for c, x in zip(comp.obj, xs))
        dobj = float(comp.b @ y)
        mu = sum(_inner(x, s) for x, s in zip(xs, ss)) / n_bar
        pinf = float(np.linalg.norm(r_p)) / b_norm
        dinf = math.sqrt(sum(_inner(r, r) for r in r_d)) / c_norm
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        log.debug("it %3d pobj %.10f dobj %.10f gap %.2e pinf %.2e dinf %.2e",
                  it, -pobj, -dobj, relgap, pinf, dinf)
        if not all(map(math.isfinite, (pinf, dinf, relgap, mu))):
            log.info("non-finite iterate at iteration %d; returning the best earlier iterate", it)
            status = STALLED
            break
        score = max(pinf / opts.feas_tol, dinf / opts.feas_tol, relgap / opts.tol)
        if best is None or score < best[0]:
            flat = 0 if best is None or score < 0.99 * best[0] else flat + 1
            best = (score, xs, ss, y)
        else:
            flat += 1
        if flat >= STALL_WINDOW:
            log.info("no improvement for %d iterations; stopping at iteration %d", flat, it)
            status = STALLED
            break
        if pinf < opts.feas_tol and dinf < opts.feas_tol and relgap < opts.tol:
            status = OPTIMAL
            break
        if _primal_infeasible(comp, y, pinf, opts):
            status = INFEASIBLE
            break

        try:
            scal = [_Scaling(k, x, s) for k, x, s in zip(comp.kinds, xs, ss)]
            schur = _SchurSolver(comp.schur([sc.w for sc in scal]))
        except np.linalg.LinAlgError as exc:
            log.info("scaling failed at iteration %d (%s); returning the best iterate", it, exc)
            status = STALLED
            break

        def direction(rcs):
            wrw = [sc.apply_w(r) for sc, r in zip(scal, r_d)]
            rhs = r_p - comp.apply([rc - q for rc, q in zip(rcs, wrw)])
            dy = schur.solve(rhs)
            ds = [r - a for r, a in zip(r_d, comp.adjoint(dy))]
            dx = [rc - sc.apply_w(d) for rc, sc, d in zip(rcs, scal, ds)]
            dx = [d if k == "lp" else _sym(d) for k, d in zip(comp.kinds, dx)]
            ds = [d if k == "lp" else _sym(d) for k, d in zip(comp.kinds, ds)]
            return dx, dy, ds

        def steps(dx, ds):
            ap, ad = math.inf, math.inf
            for sc, a, b in zip(scal, dx, ds):
                sp, sd = sc.max_steps(a, b)
                ap, ad = min(ap, sp), min(ad, sd)
            return min(1.0, opts.step_fraction * ap), min(1.0, opts.step_fraction * ad)

        try:
            if opts.mehrotra:
                dx, dy, ds = direction([sc.complementarity_rhs(0.0) for sc in scal])
                ap, ad = steps(dx, ds)
                mu_aff = sum(_inner(x + ap * a, s + ad * b)
                             for x, a, s, b in zip(xs, dx, ss, ds)) / n_bar
                expo = max(1.0, 3.0 * min(ap, ad) ** 2)
                sigma = min(1.0, max(0.0, (mu_aff / mu) ** expo))
                rcs = [sc.complementarity_rhs(sigma * mu, sc.second_order(a, b))
                       for sc, a, b in zip(scal, dx, ds)]
            else:
                rcs = [sc.complementarity_rhs(0.1 * mu) for sc in scal]
            dx, dy, ds = direction(rcs)
            ap, ad = steps(dx, ds)
        except np.linalg.LinAlgError as exc:
            log.info("direction failed at iteration %d (%s); returning the best iterate", it, exc)
            status = STALLED
            break
        if not (math.isfinite(ap) and math.isfinite(ad)):
            status = STALLED
            break
        log.debug("    steps %.3e %.3e", ap, ad)
        stalled = stalled + 1 if max(ap, ad) < 1e-10 else 0
        if stalled >= 3:
            log.info("no progress for %d iterations; stopping at iteration %d", stalled, it)
            status = STALLED
            break
        xs = [x + ap * d for x, d in zip(xs, dx)]
        ss = [s + ad * d for s, d in zip(ss, ds)]
        y = y + ad * dy

    if status in (STALLED, MAX_ITER) and best is not None:
        _, xs, ss, y = best
    return _finish(problem, comp, xs, ss, y, status, it, m_full, keep, dropped, b_norm, c_norm)


def _primal_infeasible(comp, y, pinf, opts):
    by = float(comp.b @ y)
    if pinf < opts.feas_tol or by <= 0:
        return False
    yt = y / by
    if np.linalg.norm(yt) > 1e6:
        return False
    for kind, z in zip(comp.kinds, comp.adjoint(-yt)):
        if not np.all(np.isfinite(z)):
            return False
        lam = np.min(z) if kind == "lp" else np.linalg.eigvalsh(_sym(z))[0]
        if lam < -1e-8:
            return False
    return by > 1e6


class DualEvaluator:
    """Reusable :func:`dual_bound` for many multiplier vectors on one problem."""

    def __init__(self, problem: SdpProblem):
        self.problem = problem
        self.comp = _Compiled(problem)

    def __call__(self, multipliers) -> tuple[float, float]:
        comp, problem = self.comp, self.problem
        y = np.asarray(multipliers, dtype=float)
        if y.shape != (comp.m,):
            raise ValidationError(f"expected {comp.m} multipliers, got {y.shape}")
        rate = 0.0
        for kind, info, z in zip(comp.kinds, comp.info, [a + c for c, a in zip(comp.obj, comp.adjoint(y))]):
            if not z.size:
                continue
            lam = float(np.min(z)) if kind == "lp" else float(np.linalg.eigvalsh(_sym(z))[0]) / info.scale
            rate = max(rate, -lam)
        if rate > 0 and problem.trace_bound is None:
            return math.inf, math.inf
        penalty = rate * problem.trace_bound if rate > 0 else 0.0
        return float(comp.b @ y) + penalty, penalty


def dual_bound(problem: SdpProblem, multipliers) -> tuple[float, float]:
    """Certified upper bound ``b^T y + max(0, -lambda_min(Z)) * trace_bound``.

    ``Z_k = sum_i y_i A_ik - C_k`` is the dual slack of the maximization form;
    any ``y`` yields a valid bound once the slack's negativity is charged
    against ``trace_bound``. Returns ``(bound, penalty)``.
    """
    return DualEvaluator(problem)(multipliers)


def _infeasible_solution(problem, comp, m_full, dropped, it):
    return SdpSolution(math.nan, math.nan, [], np.zeros(m_full), [], INFEASIBLE, it,
                       math.nan, math.nan, 0.0, list(map(int, dropped)))


def _finish(problem, comp, xs, ss, y, status, it, m_full, keep, dropped, b_norm, c_norm):
    if status == INFEASIBLE:
        return _infeasible_solution(problem, comp, m_full, dropped, it)
    y_full = np.zeros(m_full)
    y_full[keep] = -y  # multipliers for the maximization form
    comp_full = _Compiled(problem)
    blocks, slacks = [], []
    penalty_rate = 0.0
    # exact dual slack Z = A^T y - C for the maximization form
    zs = [a + c for c, a in zip(comp_full.obj, comp_full.adjoint(y_full))]
    for kind, info, x, z in zip(comp.kinds, comp.info, xs, zs):
        if kind == "lp":
            blocks.append(x.copy())
            slacks.append(z.copy())
            lam = float(np.min(z)) if len(z) else 0.0
        else:
            blocks.append(info.lower(x))
            slacks.append(info.lower(z) / info.scale)
            lam = float(np.linalg.eigvalsh(_sym(z))[0]) / info.scale if len(z) else 0.0
        penalty_rate = max(penalty_rate, -lam)
    primal_value = -sum(_inner(c, x) for c, x in zip(comp.obj, xs))
    dual_raw = float(comp_full.b @ y_full)
    if penalty_rate > 0 and problem.trace_bound is not None:
        penalty = penalty_rate * problem.trace_bound
    else:
        penalty = 0.0
    r_p = comp_full.b - comp_full.apply(xs)
    return SdpSolution(
        primal_value=primal_value,
        dual_value=dual_raw + penalty,
        blocks=blocks,
        multipliers=y_full,
        dual_slack=slacks,
        status=status,
        iterations=it,
        primal_residual=float(np.max(np.abs(r_p))) if len(r_p) else 0.0,
        dual_residual=max(0.0, penalty_rate),
        dual_penalty=penalty,
        dropped_constraints=list(map(int, dropped)),
    )


# -- JSON dump -------------------------------------------------------------

def _encode(a) -> dict:
    a = np.ascontiguousarray(np.asarray(a, dtype=complex))
    return {"shape": list(a.shape), "dtype": "<c16",
            "data": base64.b64encode(a.astype("<c16").tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    a = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()
    if not np.any(np.imag(a)):
        a = np.real(a).copy()
    return a


def problem_to_dict(problem: SdpProblem) -> dict:
    return {
        "sense": problem.sense,
        "trace_bound": problem.trace_bound,
        "blocks": [{"id": str(b.id), "dim": b.dim, "kind": b.kind} for b in problem.blocks],
        "objective": {str(k): _encode(v) for k, v in problem.objective.items()},
        "constraints": [{"rhs": float(np.real(c.rhs)), "group": c.group,
                         "terms": {str(k): _encode(v) for k, v in c.terms.items()}}
                        for c in problem.constraints],
    }


def problem_from_dict(d: dict) -> SdpProblem:
    blocks = [Block(b["id"], int(b["dim"]), b["kind"]) for b in d["blocks"]]
    objective = {int(k): _decode(v) for k, v in d["objective"].items()}
    constraints = [Constraint({int(k): _decode(v) for k, v in c["terms"].items()},
                              float(c["rhs"]), c.get("group", "")) for c in d["constraints"]]
    return SdpProblem(blocks, objective, constraints, d.get("trace_bound"), d.get("sense", "maximize"))


def solution_to_dict(sol: SdpSolution) -> dict:
    return {
        "status": sol.status,
        "primal_value": sol.primal_value,
        "dual_value": sol.dual_value,
        "gap": sol.gap,
        "iterations": sol.iterations,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "dual_penalty": sol.dual_penalty,
        "dropped_constraints": sol.dropped_constraints,
        "multipliers": _encode(sol.multipliers),
        "blocks": [_encode(b) for b in sol.blocks],
        "dual_slack": [_encode(z) for z in sol.dual_slack],
    }


def solution_from_dict(d: dict) -> SdpSolution:
    return SdpSolution(
        primal_value=d["primal_value"], dual_value=d["dual_value"],
        blocks=[_decode(b) for b in d["blocks"]],
        multipliers=np.real(_decode(d["multipliers"])),
        dual_slack=[_decode(z) for z in d["dual_slack"]],
        status=d["status"], iterations=d["iterations"],
        primal_residual=d["primal_residual"], dual_residual=d["dual_residual"],
        dual_penalty=d.get("dual_penalty", 0.0),
        dropped_constraints=d.get("dropped_constraints", []),
    )


def dump_problem(problem: SdpProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh)


def load_problem(path) -> SdpProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def dump_solution(sol: SdpSolution, path) -> None:
    with open(path, "w") as fh:
        json.dump(solution_to_dict(sol), fh)


def load_solution(path) -> SdpSolution:
    with open(path) as fh:
        return solution_from_dict(json.load(fh))
