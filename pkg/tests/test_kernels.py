"""The compiled kernels and the numpy fallback must agree bit for bit."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mupir import _fallback, kernels

compiled = pytest.importorskip("mupir._kernels")


@st.composite
def answer_inputs(draw):
    N = draw(st.integers(1, 4))
    F = draw(st.integers(1, 4))
    B = draw(st.integers(2, 4))
    K = draw(st.integers(1, 4))
    P = draw(st.integers(1, 9))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    gen = np.random.default_rng(seed)
    packets = gen.integers(0, 256, size=(N, F, B - 1, P), dtype=np.uint8)
    ncell = draw(st.integers(0, 5))
    rows = gen.integers(0, F, size=ncell).astype(np.int64)
    users = gen.integers(0, K, size=ncell).astype(np.int64)
    q = gen.integers(0, B, size=(K, N)).astype(np.int64)
    return packets, rows, users, q


@given(answer_inputs())
def test_xor_answer_equivalent(args):
    a = compiled.xor_answer(*args)
    b = _fallback.xor_answer(*args)
    assert np.array_equal(np.asarray(a), b)


def _reference_answer(packets, rows, users, q):
    out = np.zeros(packets.shape[3], dtype=np.uint8)
    for f, k in zip(rows, users):
        for n in range(packets.shape[0]):
            if q[k, n]:
                out ^= packets[n, f, q[k, n] - 1]
    return out


@given(answer_inputs())
def test_xor_answer_matches_loop(args):
    assert np.array_equal(kernels.xor_answer(*args), _reference_answer(*args))


@st.composite
def presence_inputs(draw):
    T, K, N, B = (draw(st.integers(1, 6)), draw(st.integers(1, 5)),
                  draw(st.integers(1, 4)), draw(st.integers(2, 3)))
    gen = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    q = gen.integers(0, B, size=(T, K, N)).astype(np.int64)
    q[gen.random((T, K)) < 0.5] = 0
    S = draw(st.integers(0, 5))
    sets = [sorted(set(gen.integers(0, K, size=gen.integers(1, K + 1)).tolist())) for _ in range(S)]
    indptr = np.cumsum([0] + [len(x) for x in sets]).astype(np.int64)
    indices = np.array([k for x in sets for k in x], dtype=np.int64)
    return q, indptr, indices, B


@given(presence_inputs())
def test_presence_equivalent(args):
    q, indptr, indices, _ = args
    a = np.asarray(compiled.presence(q, indptr, indices))
    b = _fallback.presence(q, indptr, indices)
    assert np.array_equal(a, b)
    # direct definition
    for t in range(q.shape[0]):
        for s in range(len(indptr) - 1):
            members = indices[indptr[s]:indptr[s + 1]]
            assert b[t, s] == int(q[t, members].any())


@given(presence_inputs())
def test_encode_equivalent(args):
    q, _, _, B = args
    a = np.asarray(compiled.encode_queries(q, B))
    b = _fallback.encode_queries(q, B)
    assert np.array_equal(a, b)
    assert ((b >= 0) & (b < B ** (q.shape[1] * (q.shape[2] - 1)))).all()


def test_backend_selected():
    # the editable install builds the extension; the env var overrides it
    assert kernels.BACKEND == ("python" if os.environ.get("MUPIR_PURE_PYTHON") else "cython")


def test_env_forces_fallback():
    code = "import mupir.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, MUPIR_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
