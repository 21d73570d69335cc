"""Digitization of Bob's samples and seeded Toeplitz-hashing extraction.

Three interchangeable products ``T x mod 2`` are available:

* ``naive``: one parity per output bit, straight from the definition;
* ``fft``: the output is a window of the integer convolution ``seed * x``;
* ``table``: byte-wise lookup tables shared by a batch of blocks, using the
  compiled kernel when it was built and a numpy twin otherwise.

All three agree bit for bit.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import _toeplitz_py
from .bits import BitStream, BitWriter
from .coarse import BinningScheme, periodic_bin
from .errors import SecurityGateError, ValidationError

log = logging.getLogger(__name__)

if os.environ.get("STEERQRNG_PURE_PYTHON") == "1":
    _kernel, BACKEND = _toeplitz_py, "numpy"
else:
    try:
        from . import _ctoeplitz as _kernel
        BACKEND = "cython"
    except ImportError:  # extension not built
        _kernel, BACKEND = _toeplitz_py, "numpy"

METHODS = ("table", "fft", "naive")
DEFAULT_BATCH_BITS = 1 << 25


# -- digitization ------------------------------------------------------------

def bits_per_symbol(o_b: int, allow_padding: bool = False) -> int:
    """``log2(o_B)``; other alphabet sizes need ``allow_padding``.

    With padding, ``ceil(log2 o_B)`` bits are emitted per sample. The map is
    injective, so the symbol min-entropy is unchanged.
    """
    if o_b < 2:
        raise ValidationError("o_B must be at least 2 to digitize")
    k = (o_b - 1).bit_length()
    if 1 << k != o_b and not allow_padding:
        raise ValidationError(f"o_B = {o_b} is not a power of two; bits per sample would not be integral")
    return k


def symbols_to_bits(symbols: np.ndarray, width: int) -> np.ndarray:
    """Natural binary, most significant bit first, concatenated."""
    symbols = np.asarray(symbols, dtype=np.uint32)
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint32)
    return ((symbols[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


def pack_symbols(symbols: np.ndarray, width: int) -> tuple[np.ndarray, int]:
    """Packed MSB-first bytes of the concatenated ``width``-bit symbols, and the bit count."""
    symbols = np.asarray(symbols).ravel()
    per_byte = 8 // width if 8 % width == 0 else 0
    if per_byte and symbols.size % per_byte == 0:
        grouped = symbols.astype(np.uint8).reshape(-1, per_byte)
        out = np.zeros(grouped.shape[0], dtype=np.uint8)
        for k in range(per_byte):
            out |= grouped[:, k] << np.uint8(8 - width * (k + 1))
        return out, symbols.size * width
    return np.packbits(symbols_to_bits(symbols, width)), symbols.size * width


def digitize(samples, scheme: BinningScheme, y: str = "q", allow_padding: bool = False) -> BitStream:
    """Map quadrature samples to their periodic bin indices, as bits."""
    width = bits_per_symbol(scheme.o_b, allow_padding)
    bins = periodic_bin(np.asarray(samples, dtype=float).ravel(), scheme.period(y), scheme.o_b)
    return BitStream.from_bits(symbols_to_bits(bins, width), "raw",
                               {"o_b": scheme.o_b, "period": scheme.period(y), "y": y,
                                "bits_per_sample": width})


# -- planning ----------------------------------------------------------------

@dataclass(frozen=True)
class ExtractionPlan:
    n: int
    m: int
    h_min: float
    bits_per_sample: int
    rounding: int = 100
    epsilon: float | None = None

    def __post_init__(self):
        if self.m < 1 or self.n < self.m:
            raise ValidationError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")

    @property
    def seed_length(self) -> int:
        return self.n + self.m - 1

    @property
    def bits_per_raw_sample(self) -> float:
        """Extracted bits per digitized sample, ``m / (n / bits_per_sample)``."""
        return self.m * self.bits_per_sample / self.n

    def to_dict(self) -> dict:
        return {**asdict(self), "seed_length": self.seed_length,
                "bits_per_raw_sample": self.bits_per_raw_sample}


def plan_extraction(h_min: float, bits_per_sample: int, m: int = 1024, rounding: int = 100,
                    epsilon: float | None = None, n: int | None = None) -> ExtractionPlan:
    """Smallest block length with ``n * h_min / bits_per_sample >= m``, rounded up.

    ``epsilon`` adds the leftover-hash penalty ``2 log2(1/epsilon)`` to ``m``
    in the entropy budget; the default follows the bare inequality. An
    explicit ``n`` is accepted if it meets the bound.
    """
    if not h_min > 0:
        raise SecurityGateError("no certified entropy (h_min <= 0); refusing to extract")
    if h_min > bits_per_sample:
        raise ValidationError(f"h_min = {h_min} exceeds {bits_per_sample} bits per sample")
    if m < 1 or rounding < 1:
        raise ValidationError("m and rounding must be positive")
    budget = float(m)
    if epsilon is not None:
        if not 0 < epsilon < 1:
            raise ValidationError("epsilon must lie in (0, 1)")
        budget += 2.0 * math.log2(1.0 / epsilon)
    needed = math.ceil(bits_per_sample * budget / h_min)
    if n is not None:
        if n < needed:
            raise ValidationError(f"n = {n} is below the entropy bound {needed}")
        return ExtractionPlan(n, m, h_min, bits_per_sample, rounding, epsilon)
    n = -(-needed // rounding) * rounding
    return ExtractionPlan(max(n, m), m, h_min, bits_per_sample, rounding, epsilon)


# -- Toeplitz products ---------------------------------------------------------

def _seed_bits(seed, plan: ExtractionPlan) -> np.ndarray:
    bits = seed.to_bits() if isinstance(seed, BitStream) else np.asarray(seed, dtype=np.uint8).ravel()
    if bits.size != plan.seed_length:
        raise ValidationError(f"seed has {bits.size} bits, plan needs n + m - 1 = {plan.seed_length}")
    return bits


def toeplitz_matrix(seed_bits, n: int, m: int) -> np.ndarray:
    """Dense ``T[i, j] = seed[i - j + n - 1]`` (small sizes only)."""
    seed_bits = np.asarray(seed_bits, dtype=np.uint8)
    i = np.arange(m)[:, None]
    j = np.arange(n)[None, :]
    return seed_bits[i - j + n - 1]


def naive_product(seed_bits: np.ndarray, x: np.ndarray, n: int, m: int) -> np.ndarray:
    """Row ``i`` of ``T`` is ``seed[i : i + n]`` reversed."""
    xr = np.asarray(x, dtype=np.uint8)[::-1]
    out = np.empty(m, dtype=np.uint8)
    for i in range(m):
        out[i] = np.count_nonzero(seed_bits[i:i + n] & xr) & 1
    return out


class _FftKernel:
    def __init__(self, seed_bits, n, m):
        self.n, self.m = n, m
        self.size = sfft.next_fast_len(n + m - 1, real=True)
        self.seed_hat = sfft.rfft(seed_bits.astype(np.float64), self.size)

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        """Rows of ``xs`` (unpacked 0/1 blocks) to rows of output bits."""
        conv = sfft.irfft(sfft.rfft(xs.astype(np.float64), self.size, axis=1) * self.seed_hat,
                          self.size, axis=1)
        window = conv[:, self.n - 1:self.n - 1 + self.m]
        return (np.rint(window).astype(np.int64) & 1).astype(np.uint8)


class ToeplitzExtractor:
    """Blockwise ``T x mod 2`` over a stream of raw bits.

    ``feed`` accepts packed chunks of any bit length; complete ``n``-bit
    blocks are hashed in order and leftover bits are carried to the next
    call. ``finish`` reports (and drops) a trailing partial block.
    """

    def __init__(self, seed, plan: ExtractionPlan, method: str = "table",
                 batch_bits: int = DEFAULT_BATCH_BITS):
        if method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")
        self.plan, self.method = plan, method
        self.seed_bits = _seed_bits(seed, plan)
        self.batch_blocks = max(1, batch_bits // plan.n)
        n, m = plan.n, plan.m
        if method == "table":
            self._copies = _toeplitz_py.shifted_copies(self.seed_bits, n, m)
        elif method == "fft":
            self._fft = _FftKernel(self.seed_bits, n, m)
        self._carry = np.zeros(0, dtype=np.uint8)
        self.blocks_done = 0
        self.discarded_bits = 0
        self._out = BitWriter()

    def hash_blocks(self, xs: np.ndarray) -> np.ndarray:
        """Unpacked ``(B, n)`` blocks to unpacked ``(B, m)`` outputs."""
        n, m = self.plan.n, self.plan.m
        if self.method == "naive":
            return np.stack([naive_product(self.seed_bits, x, n, m) for x in xs]) if len(xs) \
                else np.zeros((0, m), np.uint8)
        if self.method == "fft":
            return self._fft(xs)
        packed = np.ascontiguousarray(np.packbits(xs, axis=1))
        raw = _kernel.table_multiply(self._copies, packed, n, m)
        return np.unpackbits(np.asarray(raw), axis=1, count=m)

    def _hash_packed_rows(self, packed_rows: np.ndarray) -> None:
        n, m = self.plan.n, self.plan.m
        if self.method == "table":
            raw = np.asarray(_kernel.table_multiply(self._copies, packed_rows, n, m))
            if m % 8 == 0:
                self._out.write_packed(raw[:, : m // 8].ravel(), raw.shape[0] * m)
            else:
                self._out.write_bits(np.unpackbits(raw, axis=1, count=m))
        else:
            xs = np.unpackbits(packed_rows, axis=1, count=n)
            self._out.write_bits(self.hash_blocks(xs))
        self.blocks_done += packed_rows.shape[0]

    def feed(self, data: np.ndarray, nbits: int) -> None:
        n = self.plan.n
        data = np.asarray(data, dtype=np.uint8).ravel()
        if not self._carry.size and n % 8 == 0:
            # byte-aligned blocks: no unpacking needed
            whole = nbits // n
            rows = data[: whole * n // 8].reshape(whole, n // 8)
            for b0 in range(0, whole, self.batch_blocks):
                self._hash_packed_rows(np.ascontiguousarray(rows[b0:b0 + self.batch_blocks]))
            rest = nbits - whole * n
            self._carry = np.unpackbits(data[whole * n // 8:], count=rest) if rest else self._carry
            return
        bits = np.concatenate([self._carry, np.unpackbits(data, count=nbits)])
        whole = bits.size // n
        for b0 in range(0, whole, self.batch_blocks):
            b1 = min(whole, b0 + self.batch_blocks)
            rows = bits[b0 * n:b1 * n].reshape(b1 - b0, n)
            self._hash_packed_rows(np.ascontiguousarray(np.packbits(rows, axis=1)))
        self._carry = bits[whole * n:]

    def feed_stream(self, stream: BitStream) -> None:
        self.feed(stream.data, stream.length)

    def finish(self) -> BitStream:
        if self._carry.size:
            log.warning("discarding trailing partial block of %d bits", self._carry.size)
            self.discarded_bits = int(self._carry.size)
            self._carry = np.zeros(0, dtype=np.uint8)
        return self._out.getvalue("extracted", {"plan": self.plan.to_dict(),
                                                "blocks": self.blocks_done,
                                                "discarded_bits": self.discarded_bits})


def toeplitz_extract(raw: BitStream, seed, plan: ExtractionPlan, method: str = "table") -> BitStream:
    """Hash every complete ``n``-bit block of ``raw``; blocks are concatenated in order."""
    ex = ToeplitzExtractor(seed, plan, method)
    ex.feed_stream(raw)
    return ex.finish()


# -- seeds -------------------------------------------------------------------

def seed_from_file(path, nbits: int) -> BitStream:
    """Derive ``nbits`` seed bits by SHA-512 in counter mode over a file's digest.

    Convenience only: extraction assumes a uniform seed, which hashing a
    sample file does not by itself guarantee.
    """
    h = hashlib.sha512()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    root = h.digest()
    out = bytearray()
    counter = 0
    while 8 * len(out) < nbits:
        out += hashlib.sha512(root + counter.to_bytes(8, "big")).digest()
        counter += 1
    return BitStream.from_bytes(bytes(out), nbits, "seed")


def load_seed(path, nbits: int) -> BitStream:
    """First ``nbits`` of a seed file (packed bits, optional JSON sidecar)."""
    stream = BitStream.load(Path(path), origin="seed")
    if stream.length < nbits:
        raise ValidationError(f"seed file {path} holds {stream.length} bits, {nbits} needed")
    return BitStream(stream.head(nbits).data, nbits, "seed")
