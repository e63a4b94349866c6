"""Pure-Python (numpy) implementations of the hot loops in ``_kernels.pyx``."""

import numpy as np


def xor_answer(packets, rows, users, queries):
    packets = np.asarray(packets)
    rows = np.asarray(rows, dtype=np.int64)
    users = np.asarray(users, dtype=np.int64)
    out = np.zeros(packets.shape[3], dtype=np.uint8)
    if rows.size == 0:
        return out
    q = np.asarray(queries, dtype=np.int64)[users]  # (ncell, N)
    cell, n = np.nonzero(q)
    if cell.size:
        np.bitwise_xor.reduce(packets[n, rows[cell], q[cell, n] - 1], axis=0, out=out)
    return out


def presence(queries, indptr, indices):
    queries = np.asarray(queries)
    zero = ~queries.any(axis=2)  # (T, K)
    S = len(indptr) - 1
    out = np.zeros((queries.shape[0], S), dtype=np.uint8)
    for s in range(S):
        members = indices[indptr[s]:indptr[s + 1]]
        out[:, s] = ~zero[:, members].all(axis=1)
    return out


def encode_queries(queries, B):
    queries = np.asarray(queries, dtype=np.int64)
    T, K, N = queries.shape
    digits = queries[:, :, : N - 1].reshape(T, K * (N - 1))
    out = np.zeros(T, dtype=np.int64)
    for j in range(digits.shape[1]):
        out = out * B + digits[:, j]
    return out
