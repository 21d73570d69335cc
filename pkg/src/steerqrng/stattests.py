"""Autocorrelation and an eight-test NIST SP 800-22 style battery.

Implemented: frequency (monobit), block frequency, runs, longest run of
ones, cumulative sums (forward and reverse), discrete Fourier transform,
serial and approximate entropy. Sequences shorter than a test's minimum
length are reported as not applicable, never as passing.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.special import erfc, gammaincc, ndtr

from .bits import BitStream
from .errors import ValidationError

log = logging.getLogger(__name__)

IMPLEMENTED = ("frequency", "block_frequency", "runs", "longest_run", "cumulative_sums",
               "fft", "serial", "approximate_entropy")
NOT_IMPLEMENTED = ("non_overlapping_template", "overlapping_template", "universal",
                   "linear_complexity", "random_excursions", "random_excursions_variant", "rank")
UNIFORMITY_THRESHOLD = 1e-4
MIN_LENGTH = {"frequency": 100, "block_frequency": 100, "runs": 100, "longest_run": 128,
              "cumulative_sums": 100, "fft": 1000, "serial": 64, "approximate_entropy": 128}


def _as_bits(bits) -> np.ndarray:
    if isinstance(bits, BitStream):
        return bits.to_bits()
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValidationError("bits must be 0 or 1")
    return arr


# -- autocorrelation ---------------------------------------------------------

def autocorrelation(bits, max_lag: int) -> np.ndarray:
    """``rho_k`` for ``k = 1..max_lag`` of the mean-centred +-1 sequence.

    Non-circular: lag ``k`` sums the ``N - k`` overlapping products and is
    normalised by the full sum of squares.
    """
    x = _as_bits(bits).astype(np.float64) * 2.0 - 1.0
    n = x.size
    if max_lag < 1 or n <= max_lag:
        raise ValidationError(f"need 1 <= max_lag < N (N = {n}, max_lag = {max_lag})")
    if n <= 10 * max_lag:
        log.warning("autocorrelation with N = %d <= 10 * max_lag is poorly resolved", n)
    x -= x.mean()
    denom = float(np.dot(x, x))
    if denom == 0:
        raise ValidationError("constant sequence: autocorrelation is undefined")
    size = sfft.next_fast_len(n + max_lag, real=True)
    power = sfft.rfft(x, size)
    acf = sfft.irfft(power * np.conj(power), size)[1:max_lag + 1]
    return acf / denom


# -- individual tests ------------------------------------------------------------
# Each returns a list of (label, p_value) and a parameter dict.

def frequency_test(x: np.ndarray):
    n = x.size
    s = abs(2 * int(np.count_nonzero(x)) - n) / math.sqrt(n)
    return [("", float(erfc(s / math.sqrt(2))))], {}


def block_frequency_test(x: np.ndarray, m: int | None = None):
    n = x.size
    if m is None:
        # NIST guidance: M >= 20, M > 0.01 n and fewer than 100 blocks
        m = max(20, n // 100 + 1, -(-n // 99))
    blocks = n // m
    if blocks < 1:
        raise ValidationError("block length exceeds sequence length")
    pi = x[: blocks * m].reshape(blocks, m).mean(axis=1)
    chi2 = 4.0 * m * float(np.sum((pi - 0.5) ** 2))
    return [("", float(gammaincc(blocks / 2.0, chi2 / 2.0)))], {"M": m}


def runs_test(x: np.ndarray):
    n = x.size
    pi = float(np.count_nonzero(x)) / n
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return [("", 0.0)], {"prerequisite": "failed"}
    v = 1 + int(np.count_nonzero(x[1:] != x[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return [("", float(erfc(num / den)))], {}


@lru_cache(maxsize=16)
def _longest_run_cdf(m: int, r: int) -> float:
    """P(longest run of ones in m fair bits <= r), by dynamic programming."""
    # state: length of the current trailing run of ones (0..r)
    p = np.zeros(r + 1)
    p[0] = 1.0
    for _ in range(m):
        nxt = np.zeros(r + 1)
        nxt[0] = 0.5 * p.sum()
        nxt[1:] = 0.5 * p[:-1]
        p = nxt
    return float(p.sum())


LONGEST_RUN_TABLE = (  # (minimum n, M, class lower edge, class upper edge)
    (750000, 10000, 10, 16),
    (6272, 128, 4, 9),
    (128, 8, 1, 4),
)


def longest_run_test(x: np.ndarray):
    n = x.size
    for n_min, m, lo, hi in LONGEST_RUN_TABLE:
        if n >= n_min:
            break
    blocks = n // m
    rows = x[: blocks * m].reshape(blocks, m)
    padded = np.zeros((blocks, m + 2), dtype=np.int8)
    padded[:, 1:-1] = rows
    d = np.diff(padded, axis=1)
    longest = np.zeros(blocks, dtype=np.int64)
    r_idx, starts = np.nonzero(d == 1)
    _, ends = np.nonzero(d == -1)
    if r_idx.size:
        np.maximum.at(longest, r_idx, ends - starts)
    clipped = np.clip(longest, lo, hi)
    counts = np.bincount(clipped - lo, minlength=hi - lo + 1).astype(float)
    cdf = np.array([_longest_run_cdf(m, r) for r in range(lo, hi)])
    probs = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    chi2 = float(np.sum((counts - blocks * probs) ** 2 / (blocks * probs)))
    k = hi - lo
    return [("", float(gammaincc(k / 2.0, chi2 / 2.0)))], {"M": m, "K": k, "N": blocks}


def _cusum_p(z: int, n: int) -> float:
    if z == 0:
        return 0.0
    sq = math.sqrt(n)
    k1 = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
    k2 = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
    s1 = np.sum(ndtr((4 * k1 + 1) * z / sq) - ndtr((4 * k1 - 1) * z / sq))
    s2 = np.sum(ndtr((4 * k2 + 3) * z / sq) - ndtr((4 * k2 + 1) * z / sq))
    return float(min(1.0, max(0.0, 1.0 - s1 + s2)))


def cumulative_sums_test(x: np.ndarray):
    n = x.size
    s = 2 * x.astype(np.int64) - 1
    fwd = int(np.max(np.abs(np.cumsum(s))))
    rev = int(np.max(np.abs(np.cumsum(s[::-1]))))
    return [("forward", _cusum_p(fwd, n)), ("reverse", _cusum_p(rev, n))], {}


def fft_test(x: np.ndarray):
    n = x.size
    s = np.abs(np.fft.rfft(2.0 * x - 1.0)[: n // 2])
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = float(np.count_nonzero(s < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return [("", float(erfc(abs(d) / math.sqrt(2))))], {}


def _pattern_counts(x: np.ndarray, m: int) -> np.ndarray:
    """Overlapping m-bit pattern counts with wrap-around."""
    n = x.size
    ext = np.concatenate([x, x[: m - 1]]).astype(np.int64)
    v = np.zeros(n, dtype=np.int64)
    for k in range(m):
        v = (v << 1) | ext[k:k + n]
    return np.bincount(v, minlength=1 << m)


def _fold(counts: np.ndarray) -> np.ndarray:
    """Counts of (m-1)-bit prefixes from m-bit counts."""
    return counts.reshape(-1, 2).sum(axis=1)


def serial_test(x: np.ndarray, m: int | None = None):
    n = x.size
    if m is None:
        m = min(16, int(math.log2(n)) - 3)
    if m < 2:
        raise ValidationError("sequence too short for the serial test")
    c_m = _pattern_counts(x, m).astype(float)
    c_m1 = _fold(c_m)
    c_m2 = _fold(c_m1) if m >= 2 else np.array([float(n)])

    def psi(c, k):
        return 0.0 if k <= 0 else (2.0 ** k / n) * float(np.sum(c * c)) - n

    p0, p1, p2 = psi(c_m, m), psi(c_m1, m - 1), psi(c_m2, m - 2)
    d1, d2 = p0 - p1, p0 - 2 * p1 + p2
    return [("1", float(gammaincc(2.0 ** (m - 2), d1 / 2.0))),
            ("2", float(gammaincc(2.0 ** (m - 3), d2 / 2.0)))], {"m": m}


def approximate_entropy_test(x: np.ndarray, m: int | None = None):
    n = x.size
    if m is None:
        m = min(10, int(math.log2(n)) - 6)
    if m < 1:
        raise ValidationError("sequence too short for the approximate entropy test")

    def phi(k):
        c = _pattern_counts(x, k).astype(float) / n
        c = c[c > 0]
        return float(np.sum(c * np.log(c)))

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return [("", float(gammaincc(2.0 ** (m - 1), chi2 / 2.0)))], {"m": m}


TESTS = {
    "frequency": frequency_test,
    "block_frequency": block_frequency_test,
    "runs": runs_test,
    "longest_run": longest_run_test,
    "cumulative_sums": cumulative_sums_test,
    "fft": fft_test,
    "serial": serial_test,
    "approximate_entropy": approximate_entropy_test,
}


# -- battery -----------------------------------------------------------------

def proportion_band(alpha: float, n_seq: int) -> tuple[float, float, float]:
    """``(centre, half_width, lower)`` with half width ``3 sqrt(alpha (1 - alpha) / N)``."""
    if not 0 < alpha < 1 or n_seq < 1:
        raise ValidationError("need 0 < alpha < 1 and at least one sequence")
    half = 3.0 * math.sqrt(alpha * (1 - alpha) / n_seq)
    return 1.0 - alpha, half, 1.0 - alpha - half


def uniformity_pvalue(pvalues) -> float:
    """Chi-square over ten equal p-value bins, as ``P_value_T``."""
    p = np.asarray(pvalues, dtype=float)
    counts = np.bincount(np.minimum((p * 10).astype(int), 9), minlength=10)
    expected = p.size / 10.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(gammaincc(4.5, chi2 / 2.0)), counts


@dataclass
class SubtestResult:
    name: str
    pvalues: np.ndarray
    p_value_t: float
    proportion: float
    histogram: list
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "p_value_T": self.p_value_t, "proportion": self.proportion,
                "histogram": self.histogram, "passed": self.passed,
                "pvalues": [float(p) for p in self.pvalues]}


@dataclass
class TestResult:
    name: str
    status: str  # "ok", "not-applicable", "not-implemented"
    subtests: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(s.passed for s in self.subtests)

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "passed": self.passed,
                "params": self.params, "reason": self.reason,
                "subtests": [s.to_dict() for s in self.subtests]}


@dataclass
class BatteryReport:
    seq_len: int
    n_sequences: int
    alpha: float
    band: tuple
    tests: dict

    @property
    def passed(self) -> bool:
        return all(self.tests[name].passed for name in IMPLEMENTED)

    def to_dict(self) -> dict:
        centre, half, lower = self.band
        return {"seq_len": self.seq_len, "n_sequences": self.n_sequences, "alpha": self.alpha,
                "band": {"centre": centre, "half_width": half, "lower": lower},
                "uniformity_threshold": UNIFORMITY_THRESHOLD, "passed": self.passed,
                "tests": {k: v.to_dict() for k, v in self.tests.items()}}

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def rows(self):
        for name, res in self.tests.items():
            if res.status != "ok":
                yield {"test": name, "subtest": "", "P_value_T": "", "proportion": "",
                       "pass": res.status}
                continue
            for sub in res.subtests:
                yield {"test": name, "subtest": sub.name, "P_value_T": f"{sub.p_value_t:.6g}",
                       "proportion": f"{sub.proportion:.6g}", "pass": str(sub.passed)}

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["test", "subtest", "P_value_T", "proportion", "pass"])
            w.writeheader()
            w.writerows(self.rows())

    def save_histograms(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["test", "subtest", "bin_lower", "bin_upper", "count"])
            for name, res in self.tests.items():
                for sub in res.subtests:
                    for i, c in enumerate(sub.histogram):
                        w.writerow([name, sub.name, f"{i / 10:.1f}", f"{(i + 1) / 10:.1f}", c])


def run_battery(bits, seq_len: int, alpha: float = 0.01) -> BatteryReport:
    """Split ``bits`` into ``floor(N / seq_len)`` sequences and run every test.

    A subtest passes when its p-values are uniform (``P_value_T`` above
    1e-4) and the share of sequences with ``p >= alpha`` is inside the
    proportion band.
    """
    x = _as_bits(bits)
    if seq_len < 1 or x.size < 2 * seq_len:
        raise ValidationError(f"need at least two sequences of {seq_len} bits, have {x.size} bits")
    n_seq = x.size // seq_len
    seqs = x[: n_seq * seq_len].reshape(n_seq, seq_len)
    band = proportion_band(alpha, n_seq)
    tests = {}
    for name in IMPLEMENTED:
        if seq_len < MIN_LENGTH[name]:
            tests[name] = TestResult(name, "not-applicable",
                                     reason=f"needs sequences of at least {MIN_LENGTH[name]} bits")
            continue
        labels, params, pvals = None, {}, []
        for seq in seqs:
            out, params = TESTS[name](seq)
            labels = [lab for lab, _ in out]
            pvals.append([p for _, p in out])
        pvals = np.array(pvals)
        subs = []
        for j, lab in enumerate(labels):
            p = pvals[:, j]
            p_t, hist = uniformity_pvalue(p)
            prop = float(np.mean(p >= alpha))
            ok = p_t >= UNIFORMITY_THRESHOLD and abs(prop - band[0]) <= band[1]
            subs.append(SubtestResult(lab, p, p_t, prop, hist.tolist(), bool(ok)))
        tests[name] = TestResult(name, "ok", subs, params)
    for name in NOT_IMPLEMENTED:
        tests[name] = TestResult(name, "not-implemented", reason="outside the implemented battery")
    return BatteryReport(seq_len, n_seq, alpha, band, tests)


def save_autocorrelation(coeffs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lag", "rho"])
        for k, r in enumerate(coeffs, start=1):
            w.writerow([k, f"{float(r):.8e}"])
