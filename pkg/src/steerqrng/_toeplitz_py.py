"""Numpy implementation of the table-driven GF(2) Toeplitz product.

This is the import-time fallback for the compiled kernel in
``_ctoeplitz.pyx`` and follows the same algorithm: for every byte of input
(8 columns of the matrix) a 256-entry table of column combinations is built
once and shared by all blocks of a batch.
"""

import numpy as np

GROUPS_PER_PASS = 64


def shifted_copies(seed_bits: np.ndarray, n: int, m: int) -> np.ndarray:
    """``P[r]`` = seed packed from bit ``r``; windows of any offset are byte slices."""
    wbytes = 8 * ((m + 63) // 64)
    length = (len(seed_bits) + 7) // 8 + wbytes + 1
    out = np.zeros((8, length), dtype=np.uint8)
    for r in range(8):
        packed = np.packbits(seed_bits[r:])
        out[r, : packed.size] = packed
    return out


def column_windows(copies: np.ndarray, n: int, m: int, j0: int, j1: int) -> np.ndarray:
    """Packed columns ``j0 .. j1-1`` of the Toeplitz matrix (zero past ``n``)."""
    words = (m + 63) // 64
    j = np.arange(j0, j1)
    start = n - 1 - j
    valid = j < n
    start = np.where(valid, start, 0)
    idx = (start // 8)[:, None] + np.arange(8 * words)[None, :]
    cols = copies[(start % 8)[:, None], idx]
    cols[~valid] = 0
    return np.ascontiguousarray(cols).view(np.uint64)


def table_multiply(copies: np.ndarray, blocks: np.ndarray, n: int, m: int) -> np.ndarray:
    """Products for a batch of blocks packed as ``(B, ceil(n/8))`` bytes.

    Returns ``(B, 8 * ceil(m/64))`` bytes; bits past ``m`` are garbage and
    must be masked by the caller.
    """
    words = (m + 63) // 64
    n_blocks, n_groups = blocks.shape
    out = np.zeros((n_blocks, words), dtype=np.uint64)
    for g0 in range(0, n_groups, GROUPS_PER_PASS):
        g1 = min(n_groups, g0 + GROUPS_PER_PASS)
        cols = column_windows(copies, n, m, 8 * g0, 8 * g1).reshape(g1 - g0, 8, words)
        tables = np.zeros((g1 - g0, 1, words), dtype=np.uint64)
        for k in range(8):
            # the first column processed ends up as the index's most significant bit
            step = np.stack([np.zeros_like(cols[:, k]), cols[:, k]], axis=1)
            tables = (tables[:, :, None, :] ^ step[:, None, :, :]).reshape(g1 - g0, -1, words)
        picked = tables[np.arange(g1 - g0)[None, :], blocks[:, g0:g1]]
        out ^= np.bitwise_xor.reduce(picked, axis=1)
    return out.view(np.uint8)
