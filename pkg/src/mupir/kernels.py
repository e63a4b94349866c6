"""Hot-loop dispatch: the compiled extension when it was built, numpy otherwise.

Set ``MUPIR_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("MUPIR_PURE_PYTHON"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def xor_answer(packets, rows, users, queries):
    """XOR-accumulate ``packets[n, rows[i], Q[users[i], n] - 1]`` over cells and files, skipping Q = 0."""
    return _impl.xor_answer(
        np.ascontiguousarray(packets, dtype=np.uint8),
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(users, dtype=np.int64),
        np.ascontiguousarray(queries, dtype=np.int64),
    )


def presence(queries, indptr, indices):
    """(T, S) flags: entry s of a server-0 broadcast is sent unless all users in K_s queried zero."""
    return _impl.presence(
        np.ascontiguousarray(queries, dtype=np.int64),
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
    )


def encode_queries(queries, B):
    """Index in ``[0, B**(K(N-1)))`` of each joint query tuple (last coordinate is implied)."""
    return _impl.encode_queries(np.ascontiguousarray(queries, dtype=np.int64), int(B))
