"""Simulated homodyne sessions and covariance-matrix reconstruction.

Samples are calibrated quadrature values in shot-noise units. Each session
fixes one quadrature per party; second moments of the two-mode state are
recovered from variances of single quadratures and of their sums and
differences, with the q-p cross blocks assumed zero.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidStateError, ValidationError
from .gaussian import CovMat, as_covmat, validate_cm

log = logging.getLogger(__name__)

QUADRATURES = ("q", "p")
# row/column of each (party, quadrature) in the CM
CM_INDEX = {("A", "q"): 0, ("A", "p"): 1, ("B", "q"): 2, ("B", "p"): 3}
JACKKNIFE_BLOCKS = 100
DEFAULT_SAMPLE_RATE = 10e6


@dataclass(frozen=True)
class Session:
    """One homodyne run: Alice measures ``setting[0]``, Bob ``setting[1]``."""

    setting: tuple
    samples: np.ndarray
    seed: int
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        setting = tuple(self.setting)
        if len(setting) != 2 or any(s not in QUADRATURES for s in setting):
            raise ValidationError(f"setting must be a pair from {QUADRATURES}, got {self.setting!r}")
        object.__setattr__(self, "setting", setting)
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError("samples must be an N x 2 array")
        if arr.shape[0] < 2:
            raise ValidationError("a session needs at least two samples")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("samples must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def indices(self) -> tuple[int, int]:
        return CM_INDEX[("A", self.setting[0])], CM_INDEX[("B", self.setting[1])]


def marginal_cov(cm, setting) -> np.ndarray:
    i, j = CM_INDEX[("A", setting[0])], CM_INDEX[("B", setting[1])]
    m = as_covmat(cm).entries
    return m[np.ix_([i, j], [i, j])]


def sample_session(cm, setting, n: int, seed: int, sample_rate: float = DEFAULT_SAMPLE_RATE) -> Session:
    """``n`` i.i.d. zero-mean draws of the two measured quadratures."""
    cm = as_covmat(cm)
    if n < 2:
        raise ValidationError("n must be at least 2")
    diag = validate_cm(cm)
    if not diag.passed:
        raise InvalidStateError(f"covariance matrix is unphysical (min eigenvalue {diag.min_eigenvalue:.3e})")
    cov = marginal_cov(cm, tuple(setting))
    w, v = np.linalg.eigh(cov)
    if w[0] < -1e-12:
        raise InvalidStateError("measured marginal covariance is not positive semidefinite")
    root = v * np.sqrt(np.clip(w, 0.0, None))
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((n, 2)) @ root.T
    return Session(tuple(setting), samples, int(seed), sample_rate)


def sample_quadrature(variance: float, n: int, rng: np.random.Generator, chunk: int = 1 << 22):
    """Yield chunks of zero-mean Gaussian samples, ``n`` in total."""
    sd = math.sqrt(variance)
    left = n
    while left > 0:
        k = min(chunk, left)
        yield sd * rng.standard_normal(k)
        left -= k


# -- reconstruction ----------------------------------------------------------

def _block_sums(x: np.ndarray, n_blocks: int) -> np.ndarray:
    """Per-block sums of ``x`` over ``n_blocks`` contiguous, near-equal blocks."""
    edges = np.linspace(0, len(x), n_blocks + 1).astype(np.int64)
    return np.add.reduceat(x, edges[:-1]) if len(x) else np.zeros(n_blocks)


class _Moments:
    """Pooled first and second moments with leave-one-block-out variants."""

    def __init__(self, series: list[np.ndarray], n_blocks: int):
        self.count = np.zeros(n_blocks)
        self.s1 = np.zeros(n_blocks)
        self.s2 = np.zeros(n_blocks)
        for x in series:
            if len(x) < n_blocks:
                raise ValidationError(f"sessions need at least {n_blocks} samples for the jackknife")
            edges = np.linspace(0, len(x), n_blocks + 1).astype(np.int64)
            self.count += np.diff(edges)
            self.s1 += _block_sums(x, n_blocks)
            self.s2 += _block_sums(x * x, n_blocks)

    @staticmethod
    def _var(c, s1, s2):
        mean = s1 / c
        return (s2 - c * mean * mean) / (c - 1)

    def full(self) -> float:
        return float(self._var(self.count.sum(), self.s1.sum(), self.s2.sum()))

    def leave_one_out(self) -> np.ndarray:
        return self._var(self.count.sum() - self.count, self.s1.sum() - self.s1, self.s2.sum() - self.s2)


def _jackknife_se(loo: np.ndarray) -> float:
    g = len(loo)
    return float(math.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2)))


@dataclass
class Reconstruction:
    cm: CovMat
    stderr: np.ndarray
    physical: bool
    warning: str | None = None
    estimators: dict = field(default_factory=dict)
    n_samples: int = 0
    # delete-one-block CM estimates, shape (n_blocks, 4, 4); feeds jackknife errors of derived quantities
    leave_one_out: np.ndarray | None = field(default=None, repr=False)

    def jackknife(self, statistic) -> tuple[float, float]:
        """``(value, stderr)`` of ``statistic(cm_entries)`` by the delete-one-block jackknife."""
        if self.leave_one_out is None:
            raise ValidationError("reconstruction carries no leave-one-out estimates")
        loo = np.array([statistic(m) for m in self.leave_one_out], dtype=float)
        return float(statistic(self.cm.entries)), _jackknife_se(loo)

    def to_dict(self) -> dict:
        return {
            "cm": self.cm.to_list(),
            "stderr": self.stderr.ravel().tolist(),
            "physical": self.physical,
            "warning": self.warning,
            "estimators": self.estimators,
            "n_samples": self.n_samples,
        }


def covariance_from_sum(var_sum, var_a, var_b):
    """``C = (V(A+B) - V(A) - V(B)) / 2``."""
    return 0.5 * (var_sum - var_a - var_b)


def covariance_from_difference(var_diff, var_a, var_b):
    """``C = (V(A) + V(B) - V(A-B)) / 2``."""
    return 0.5 * (var_a + var_b - var_diff)


def reconstruct_cm(sessions, n_blocks: int = JACKKNIFE_BLOCKS) -> Reconstruction:
    """Estimate the CM from per-setting sessions.

    Variances come from every session measuring that quadrature. The
    ``q_A q_B`` and ``p_A p_B`` correlations average the sum-based estimator
    ``(V(A+B) - V(A) - V(B)) / 2`` and the difference-based one
    ``(V(A) + V(B) - V(A-B)) / 2``. Standard errors are delete-one-block
    jackknife estimates over ``n_blocks`` blocks per session.
    """
    sessions = sorted(sessions, key=lambda s: (s.setting, s.seed, s.n))
    if not sessions:
        raise ValidationError("no sessions given")
    have = {s.setting for s in sessions}
    for need in (("q", "q"), ("p", "p")):
        if need not in have:
            raise ValidationError(f"missing session with setting {need}")

    cm = np.zeros((4, 4))
    se = np.zeros((4, 4))
    loo_cm = np.zeros((n_blocks, 4, 4))
    loo_diag = {}
    for party, col in (("A", 0), ("B", 1)):
        for quad in QUADRATURES:
            series = [s.samples[:, col] for s in sessions if s.setting[col] == quad]
            mom = _Moments(series, n_blocks)
            k = CM_INDEX[(party, quad)]
            cm[k, k] = mom.full()
            loo_diag[k] = mom.leave_one_out()
            loo_cm[:, k, k] = loo_diag[k]
            se[k, k] = _jackknife_se(loo_diag[k])

    estimators = {}
    for quad in QUADRATURES:
        group = [s for s in sessions if s.setting == (quad, quad)]
        i, j = CM_INDEX[("A", quad)], CM_INDEX[("B", quad)]
        a = _Moments([s.samples[:, 0] for s in group], n_blocks)
        b = _Moments([s.samples[:, 1] for s in group], n_blocks)
        plus = _Moments([s.samples[:, 0] + s.samples[:, 1] for s in group], n_blocks)
        minus = _Moments([s.samples[:, 0] - s.samples[:, 1] for s in group], n_blocks)
        c_sum = covariance_from_sum(plus.full(), a.full(), b.full())
        c_diff = covariance_from_difference(minus.full(), a.full(), b.full())
        loo_sum = covariance_from_sum(plus.leave_one_out(), a.leave_one_out(), b.leave_one_out())
        loo_diff = covariance_from_difference(minus.leave_one_out(), a.leave_one_out(),
                                              b.leave_one_out())
        cm[i, j] = cm[j, i] = 0.5 * (c_sum + c_diff)
        se[i, j] = se[j, i] = _jackknife_se(0.5 * (loo_sum + loo_diff))
        loo_cm[:, i, j] = loo_cm[:, j, i] = 0.5 * (loo_sum + loo_diff)
        estimators[quad] = {"sum": c_sum, "difference": c_diff,
                            "sum_stderr": _jackknife_se(loo_sum),
                            "difference_stderr": _jackknife_se(loo_diff)}

    out = CovMat(cm)
    diag = validate_cm(out)
    warning = None
    if not diag.passed:
        warning = f"reconstructed CM is not physical (min eigenvalue {diag.min_eigenvalue:.3e})"
        log.warning(warning)
    return Reconstruction(out, se, diag.passed, warning, estimators, sum(s.n for s in sessions),
                          loo_cm)


def default_sessions(cm, n: int, seed: int, sample_rate: float = DEFAULT_SAMPLE_RATE) -> list[Session]:
    """The two settings needed by :func:`reconstruct_cm`, with derived seeds."""
    seeds = np.random.SeedSequence(seed).generate_state(2)
    return [sample_session(cm, ("q", "q"), n, int(seeds[0]), sample_rate),
            sample_session(cm, ("p", "p"), n, int(seeds[1]), sample_rate)]


# -- files -------------------------------------------------------------------

def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_session(session: Session, path) -> None:
    """Little-endian float64 pairs plus a JSON sidecar."""
    path = Path(path)
    session.samples.astype("<f8").tofile(path)
    meta = {"setting": list(session.setting), "n": session.n, "seed": session.seed,
            "sample_rate": session.sample_rate, "dtype": "<f8", "columns": ["alice", "bob"]}
    _sidecar(path).write_text(json.dumps(meta, indent=2))


def load_session(path) -> Session:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    data = np.fromfile(path, dtype="<f8")
    if data.size != 2 * meta["n"]:
        raise ValidationError(f"{path}: expected {meta['n']} sample pairs, found {data.size / 2:g}")
    return Session(tuple(meta["setting"]), data.reshape(-1, 2), int(meta["seed"]),
                   float(meta.get("sample_rate", DEFAULT_SAMPLE_RATE)))


def save_reconstruction(rec: Reconstruction, path) -> None:
    Path(path).write_text(json.dumps(rec.to_dict(), indent=2))
