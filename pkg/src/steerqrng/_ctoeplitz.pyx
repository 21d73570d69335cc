# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled table-driven GF(2) Toeplitz product (see ``_toeplitz_py``)."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint64_t
from libc.string cimport memcpy, memset
from libc.stdlib cimport malloc, free

cnp.import_array()


def table_multiply(const uint8_t[:, ::1] copies, const uint8_t[:, ::1] blocks, Py_ssize_t n, Py_ssize_t m):
    cdef Py_ssize_t words = (m + 63) // 64
    cdef Py_ssize_t n_blocks = blocks.shape[0]
    cdef Py_ssize_t n_groups = blocks.shape[1]
    out_arr = np.zeros((n_blocks, words), dtype=np.uint64)
    cdef uint64_t[:, ::1] out = out_arr
    cdef uint64_t* table = <uint64_t*> malloc(256 * words * sizeof(uint64_t))
    cdef uint64_t* col = <uint64_t*> malloc(words * sizeof(uint64_t))
    if table == NULL or col == NULL:
        free(table)
        free(col)
        raise MemoryError()
    cdef Py_ssize_t g, k, u, w, b, j, start, bit
    cdef uint8_t v
    cdef uint64_t* row
    cdef uint64_t* src
    try:
        with nogil:
            for g in range(n_groups):
                memset(table, 0, words * sizeof(uint64_t))
                for k in range(8):
                    j = 8 * g + k
                    if j < n:
                        start = n - 1 - j
                        memcpy(col, &copies[start % 8, start // 8], words * sizeof(uint64_t))
                    else:
                        memset(col, 0, words * sizeof(uint64_t))
                    bit = 128 >> k
                    u = 0
                    while u < 256:
                        row = table + (u + bit) * words
                        src = table + u * words
                        for w in range(words):
                            row[w] = src[w] ^ col[w]
                        u += 2 * bit
                for b in range(n_blocks):
                    v = blocks[b, g]
                    if v:
                        row = table + v * words
                        for w in range(words):
                            out[b, w] ^= row[w]
    finally:
        free(table)
        free(col)
    return out_arr.view(np.uint8)
