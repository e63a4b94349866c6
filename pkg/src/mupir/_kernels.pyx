# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror :mod:`mupir._fallback`."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, int64_t

cnp.import_array()


def xor_answer(const uint8_t[:, :, :, ::1] packets, const int64_t[::1] rows,
               const int64_t[::1] users, const int64_t[:, ::1] queries):
    """XOR of packets[n, rows[i], q - 1] over cells i and files n with q = queries[users[i], n] > 0."""
    cdef Py_ssize_t P = packets.shape[3]
    cdef Py_ssize_t N = packets.shape[0]
    cdef Py_ssize_t ncell = rows.shape[0]
    cdef Py_ssize_t i, n, j
    cdef int64_t q, r, k
    out_arr = np.zeros(P, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    cdef const uint8_t[::1] src
    for i in range(ncell):
        r = rows[i]
        k = users[i]
        for n in range(N):
            q = queries[k, n]
            if q == 0:
                continue
            src = packets[n, r, q - 1]
            for j in range(P):
                out[j] ^= src[j]
    return out_arr


def presence(const int64_t[:, :, ::1] queries, const int64_t[::1] indptr,
             const int64_t[::1] indices):
    """present[t, s] = 1 unless every user in K_s sent an all-zero query in realization t."""
    cdef Py_ssize_t T = queries.shape[0]
    cdef Py_ssize_t K = queries.shape[1]
    cdef Py_ssize_t N = queries.shape[2]
    cdef Py_ssize_t S = indptr.shape[0] - 1
    cdef Py_ssize_t t, k, n, s, j
    zero_arr = np.empty(K, dtype=np.uint8)
    cdef uint8_t[::1] zero = zero_arr
    out_arr = np.zeros((T, S), dtype=np.uint8)
    cdef uint8_t[:, ::1] out = out_arr
    for t in range(T):
        for k in range(K):
            zero[k] = 1
            for n in range(N):
                if queries[t, k, n] != 0:
                    zero[k] = 0
                    break
        for s in range(S):
            for j in range(indptr[s], indptr[s + 1]):
                if not zero[indices[j]]:
                    out[t, s] = 1
                    break
    return out_arr


def encode_queries(const int64_t[:, :, ::1] queries, int64_t B):
    """Mixed-radix index of each joint query tuple from its first N-1 coordinates per user."""
    cdef Py_ssize_t T = queries.shape[0]
    cdef Py_ssize_t K = queries.shape[1]
    cdef Py_ssize_t N = queries.shape[2]
    cdef Py_ssize_t t, k, n
    cdef int64_t acc
    out_arr = np.empty(T, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    for t in range(T):
        acc = 0
        for k in range(K):
            for n in range(N - 1):
                acc = acc * B + queries[t, k, n]
        out[t] = acc
    return out_arr
