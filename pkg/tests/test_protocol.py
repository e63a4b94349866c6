import json
import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mupir import rng
from mupir.analysis import theorem1_rate
from mupir.constructions import ManParams, example_pdas, man_pda, single_user_pda, trivial_pda
from mupir.harness import enumerate_rounds
from mupir.pda import InvalidPdaError, Pda
from mupir.protocol import (Broadcast, FileSet, ProtocolError, QueryVector, SystemConfig,
                            build_queries, decode, decode_query, encode_query, gen_queries,
                            place, place_uncoded, run_round, server_answer)
from mupir.regress import (SEC4A_DEMANDS, SEC4A_V, EXAMPLE_QUERIES, EXAMPLE_SERVER0_TERMS, onehot_files,
                           packet_terms)

from .strategies import valid_pdas

SEC4A = example_pdas()["sec4a"]
TINY = Pda.from_grid([["*", 1], [1, "*"]])  # the (2,2,1,1) PDA


def cfg(pda, B, N, L=64, **kw):
    return SystemConfig(B=B, N=N, pda=pda, file_bytes=L, **kw)


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        cfg(SEC4A, 1, 6)
    with pytest.raises(ValueError):
        cfg(SEC4A, 3, 0)
    with pytest.raises(ValueError):
        cfg(SEC4A, 3, 6, L=0)
    with pytest.raises(InvalidPdaError):
        cfg(example_pdas()["sec3a"], 2, 8)


def test_padding():
    c = cfg(SEC4A, 3, 6, L=50)
    assert c.subpacketization == 8
    assert c.padded_bytes % 8 == 0 and c.padded_bytes >= 50
    files = FileSet.random(c)
    assert files.pad_length == 8 * (c.padded_bytes - 50)
    tr = run_round(c, files, SEC4A_DEMANDS)
    assert all(tr.success) and all(len(x) == 50 for x in tr.decoded)


def test_from_bytes_checks_lengths():
    c = cfg(TINY, 2, 2, L=3)
    with pytest.raises(ValueError):
        FileSet.from_bytes([b"abc", b"ab"], c)
    with pytest.raises(ValueError):
        FileSet.from_bytes([b"abc"], c)
    fs = FileSet.from_bytes([b"abc", b"xyz"], c)
    assert fs.original(1) == b"xyz"


def test_placement_sec4a():
    c = cfg(SEC4A, 3, 6)
    caches = place(c, FileSet.random(c))
    assert caches[0].rows == (0, 1)
    for cache in caches:
        assert cache.num_subfiles == c.N * SEC4A.Z
        assert cache.size_bits == c.N * SEC4A.Z * c.L_bits // SEC4A.F


def test_placement_bytes_match_files():
    c = cfg(SEC4A, 3, 6)
    files = FileSet.random(c)
    pk = files.packets(c)
    for cache in place(c, files):
        for f in cache.rows:
            assert np.array_equal(cache.subfile(4, f), pk[4, f])


def test_placement_zero_column_and_man21():
    c = cfg(single_user_pda(3, 0), 2, 2)
    assert place(c, FileSet.random(c))[0].num_subfiles == 0
    c = cfg(man_pda(ManParams(2, 1)), 2, 2)
    for cache in place(c, FileSet.random(c)):
        assert cache.num_subfiles == 2 and len(cache.rows) == 1


def test_placement_wrong_padding():
    c = cfg(SEC4A, 3, 6)
    bad = FileSet(np.zeros((6, 10), dtype=np.uint8), 10)
    with pytest.raises(ProtocolError):
        place(c, bad)


def test_example_queries():
    c = cfg(SEC4A, 3, 6)
    V, Q = gen_queries(c, SEC4A_DEMANDS, V=np.array(SEC4A_V))
    for k in range(6):
        for b in range(3):
            assert tuple(Q[b, k]) == EXAMPLE_QUERIES[k][b]


def test_vbar_convention():
    # the printed example uses the negated sum; decoding here uses the plain sum
    printed = [2, 0, 2, 1, 0, 1]
    assert [(-sum(v)) % 3 for v in SEC4A_V] == printed
    assert [sum(v) % 3 for v in SEC4A_V] == [(-x) % 3 for x in printed]


def test_single_file_queries():
    c = cfg(trivial_pda(), 3, 1)
    V, Q = gen_queries(c, [0])
    assert V.shape == (1, 0)
    assert [tuple(Q[b, 0]) for b in range(3)] == [(0,), (1,), (2,)]


def test_demand_out_of_range():
    c = cfg(SEC4A, 3, 6)
    with pytest.raises(ValueError):
        gen_queries(c, [6, 0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        gen_queries(c, [0, 0])


def test_queries_deterministic_per_seed():
    c = cfg(SEC4A, 3, 6)
    a = gen_queries(c, SEC4A_DEMANDS, round_index=2)[0]
    b = gen_queries(c, SEC4A_DEMANDS, round_index=2)[0]
    d = gen_queries(c, SEC4A_DEMANDS, round_index=3)[0]
    assert np.array_equal(a, b) and not np.array_equal(a, d)


@given(st.integers(2, 5), st.integers(1, 6), st.integers(1, 4), st.data())
def test_query_sum_and_shared_coordinates(B, N, K, data):
    V = np.array(data.draw(st.lists(st.lists(st.integers(0, B - 1), min_size=N - 1, max_size=N - 1),
                                    min_size=K, max_size=K)), dtype=np.int64).reshape(K, N - 1)
    d = np.array(data.draw(st.lists(st.integers(0, N - 1), min_size=K, max_size=K)))
    Q = build_queries(V, d, B)
    assert Q.shape == (B, K, N)
    assert (Q.sum(axis=2) % B == np.arange(B)[:, None]).all()
    for k in range(K):
        others = [n for n in range(N) if n != d[k]]
        assert (Q[:, k, others] == V[k]).all()
        assert len({int(Q[b, k, d[k]]) for b in range(B)}) == B


@pytest.mark.parametrize("B,N", [(2, 1), (2, 5), (3, 4), (4, 3), (5, 3), (2, 13), (4, 7)])
def test_query_bijection(B, N):
    # V -> Q_b is a bijection onto the sum-constrained vectors, for every demand
    assert B ** (N - 1) <= 4096
    Vs = np.array(list(product(range(B), repeat=N - 1)), dtype=np.int64).reshape(B ** (N - 1), 1, N - 1)
    target = {q for q in product(range(B), repeat=N) if sum(q) % B == 0}
    for d in range(N):
        Q = build_queries(Vs, np.array([d]), B)
        for b in range(B):
            seen = {tuple(x) for x in Q[:, b, 0]}
            assert len(seen) == B ** (N - 1)
            assert all(sum(q) % B == b for q in seen)
        assert {tuple(x) for x in Q[:, 0, 0]} == target


@given(st.integers(2, 9), st.integers(1, 8), st.data())
def test_wire_round_trip(B, N, data):
    body = data.draw(st.lists(st.integers(0, B - 1), min_size=N - 1, max_size=N - 1))
    b = data.draw(st.integers(0, B - 1))
    q = body + [(b - sum(body)) % B]
    wire = encode_query(q, B)
    assert len(wire) == math.ceil((N - 1) * max(1, math.ceil(math.log2(B))) / 8)
    assert decode_query(wire, N, B, b) == q
    assert QueryVector.from_wire(wire, 0, b, N, B).symbols == tuple(q)


def test_wire_rejects_bad():
    with pytest.raises(ProtocolError):
        decode_query(b"\x00\x00", 4, 3, 0)
    with pytest.raises(ProtocolError):
        decode_query(bytes([0b11000000]), 2, 3, 0)  # symbol 3 with B=3
    with pytest.raises(ProtocolError):
        encode_query([5, 0], 3)


def test_example_server0_answer_terms():
    c = cfg(SEC4A, 3, 6, L=48)
    files = onehot_files(c)
    _, Q = gen_queries(c, SEC4A_DEMANDS, V=np.array(SEC4A_V))
    assert packet_terms(c, server_answer(c, files, 0, Q[0]).get(1)) == EXAMPLE_SERVER0_TERMS
    # servers 1 and 2 differ only in the bold (demanded) coordinates
    x1 = packet_terms(c, server_answer(c, files, 1, Q[1]).get(1))
    assert EXAMPLE_SERVER0_TERMS - x1 == {(0, 2, 1), (3, 2, 3)}
    assert x1 - EXAMPLE_SERVER0_TERMS == {(1, 1, 2)}


def test_server0_all_zero_queries():
    c = cfg(SEC4A, 3, 6)
    _, Q = gen_queries(c, SEC4A_DEMANDS, V=np.zeros((6, 5), dtype=np.int64))
    bc = server_answer(c, FileSet.random(c), 0, Q[0])
    assert bc.present == (False,) * 4 and bc.payload_bits == 0
    assert bc.to_bytes() == b"\x00"
    # other servers always answer in full
    bc1 = server_answer(c, FileSet.random(c), 1, Q[1])
    assert all(bc1.present) and bc1.bitmap_bits == 0


def test_server_rejects_malformed():
    c = cfg(SEC4A, 3, 6)
    files = FileSet.random(c)
    _, Q = gen_queries(c, SEC4A_DEMANDS, V=np.array(SEC4A_V))
    with pytest.raises(ProtocolError):
        server_answer(c, files, 1, Q[0])  # sums to 0, not 1
    bad = Q[0].copy()
    bad[0, 0] = 3
    with pytest.raises(ProtocolError):
        server_answer(c, files, 0, bad)
    with pytest.raises(ProtocolError):
        server_answer(c, files, 0, Q[0][:5])


def test_tiny_suppression_probability():
    c = cfg(TINY, 2, 2)
    files = FileSet.random(c)
    suppressed = 0
    for v1, v2 in product(range(2), repeat=2):
        _, Q = gen_queries(c, [0, 1], V=np.array([[v1], [v2]]))
        bc = server_answer(c, files, 0, Q[0])
        suppressed += not bc.present[0]
        assert (not bc.present[0]) == (v1 == v2 == 0)
    assert Fraction(suppressed, 4) == Fraction(1, 4)


@pytest.mark.parametrize("pda,B,N", [
    (TINY, 2, 2), (TINY, 3, 2), (SEC4A, 2, 2), (man_pda(ManParams(3, 1)), 2, 3),
    (single_user_pda(3, 1), 3, 3), (trivial_pda(), 2, 4),
])
def test_suppression_exactness(pda, B, N):
    # absent iff the symbolic sum is empty; one-hot files expose the symbolic sum
    count = N * pda.F * (B - 1)
    c = cfg(pda, B, N, L=-(-count // 8) * pda.F * (B - 1))
    files = onehot_files(c)
    for V in product(range(B), repeat=pda.K * (N - 1)):
        V = np.array(V, dtype=np.int64).reshape(pda.K, N - 1)
        for d in [np.zeros(pda.K, dtype=np.int64), np.arange(pda.K) % N]:
            _, Q = gen_queries(c, d, V=V)
            bc = server_answer(c, files, 0, Q[0])
            for s in range(1, pda.S + 1):
                symbolic = any(Q[0, k].any() for k in range(pda.K)
                               for f in range(pda.F) if pda.cell(f, k) == s)
                assert bc.present[s - 1] == symbolic
                if not symbolic:
                    continue
                # no two cells of one label share a row, so terms cannot cancel
                assert bool(bc.get(s).any())


def test_decode_identities_user3_user1():
    from mupir import kernels

    c = cfg(SEC4A, 3, 6, L=48)
    pk = onehot_files(c).packets(c)
    _, Q = gen_queries(c, SEC4A_DEMANDS, V=np.array(SEC4A_V))

    def A(b, f, k):
        return kernels.xor_answer(pk, np.array([f - 1]), np.array([k - 1]), Q[b])

    assert packet_terms(c, A(0, 1, 3) ^ A(1, 1, 3)) == {(0, 2, 1)}
    assert packet_terms(c, A(2, 1, 3) ^ A(1, 1, 3)) == {(0, 1, 1)}
    assert packet_terms(c, A(2, 3, 1) ^ A(1, 3, 1)) == {(3, 1, 3)}
    assert packet_terms(c, A(0, 3, 1) ^ A(1, 3, 1)) == {(3, 2, 3)}
    # user 2 has V-bar 0: its zero packet sits at server 0
    assert packet_terms(c, A(1, 2, 2) ^ A(0, 2, 2)) == {(1, 1, 2)}


def _broadcasts(c, files, Q):
    return [server_answer(c, files, b, Q[b]) for b in range(c.B)]


def test_decode_errors():
    c = cfg(SEC4A, 3, 6)
    files = FileSet.random(c)
    caches = place(c, files)
    V, Q = gen_queries(c, SEC4A_DEMANDS, V=np.array(SEC4A_V))
    bcs = _broadcasts(c, files, Q)
    assert decode(c, 0, 3, caches[0], V[0], Q, bcs) == files.original(3)
    with pytest.raises(ProtocolError):
        decode(c, 0, 3, caches[0], V[0], Q, bcs[:2])
    short = Broadcast(2, bcs[2].present, bcs[2].packets[:, :-1])
    with pytest.raises(ProtocolError):
        decode(c, 0, 3, caches[0], V[0], Q, bcs[:2] + [short])


def test_sec4a_round_rate_and_upload():
    c = cfg(SEC4A, 3, 6, L=4096)
    tr = run_round(c, FileSet.random(c), SEC4A_DEMANDS, V=np.array(SEC4A_V))
    assert tr.total_download_bits == Fraction(3, 2) * c.L_bits
    assert tr.server_rates == [Fraction(1, 2)] * 3
    assert math.isclose(tr.upload_bits, 90 * math.log2(3))
    assert tr.upload_wire_bits == 90 * 2
    assert tr.subpacketization == 8
    assert all(tr.success)
    assert tr.bitmap_bits == 4


def test_sec4a_suppression_round():
    c = cfg(SEC4A, 3, 6, L=4096)
    V = np.array(SEC4A_V)
    V[:3] = 0
    tr = run_round(c, FileSet.random(c), SEC4A_DEMANDS, V=V)
    assert tr.present[0] == [2, 3, 4]
    assert tr.total_download_bits == Fraction(3, 2) * c.L_bits - c.L_bits // 8
    assert all(tr.success)


def test_trivial_single_file_round():
    c = cfg(trivial_pda(), 3, 1, L=10)
    tr = run_round(c, FileSet.random(c), [0])
    assert tr.present[0] == [] and tr.rate == 1 and all(tr.success)


@given(valid_pdas(max_k=4), st.integers(2, 4), st.integers(1, 4), st.integers(0, 2 ** 32), st.data())
def test_round_trip_property(pda, B, N, seed, data):
    c = SystemConfig(B=B, N=N, pda=pda, file_bytes=data.draw(st.integers(1, 200)), seed=seed)
    d = data.draw(st.lists(st.integers(0, N - 1), min_size=pda.K, max_size=pda.K))
    tr = run_round(c, FileSet.random(c), d)
    assert all(tr.success)
    assert tr.upload_symbols == B * pda.K * (N - 1)


def test_sec3a_user5_cannot_decode():
    # the printed array breaks C3 for label 5, so user 5 misses subfile 3's interference
    p = example_pdas()["sec3a"]
    c = SystemConfig(B=2, N=8, pda=p, file_bytes=96, strict=False)
    tr = run_round(c, FileSet.random(c), [0, 1, 2, 3, 4, 5, 6, 7])
    assert tr.success == [True, True, True, True, False, True, True, True]


def test_uncoded_delivery():
    c = cfg(SEC4A, 3, 6, L=96)
    tr = run_round(c, FileSet.random(c), SEC4A_DEMANDS, mode="uncoded")
    assert tr.rate == 3 and all(tr.success) and tr.upload_bits == 0
    c = cfg(single_user_pda(2, 0), 2, 2)
    assert run_round(c, FileSet.random(c), [1], mode="uncoded").rate == 2
    c = cfg(man_pda(ManParams(2, 2)), 2, 3)
    assert run_round(c, FileSet.random(c), [1, 2], mode="uncoded").rate == 0
    p = example_pdas()["sec3a"]
    c = SystemConfig(B=2, N=8, pda=p, file_bytes=96, strict=False)
    tr = run_round(c, FileSet.random(c), [7] * 8, mode="uncoded")
    assert tr.rate == 4 and all(tr.success)


def test_uncoded_placement_is_prefix():
    c = cfg(SEC4A, 3, 6)
    files = FileSet.random(c)
    for cache in place_uncoded(c, files):
        assert cache.rows == (0, 1)


def test_transcript_deterministic():
    c = cfg(SEC4A, 3, 6, seed=99)
    a = run_round(c, FileSet.random(c, 1), SEC4A_DEMANDS, round_index=1, keep_broadcasts=True)
    b = run_round(c, FileSet.random(c, 1), SEC4A_DEMANDS, round_index=1, keep_broadcasts=True)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["rate"] == "3/2" and len(d["raw_broadcasts"]) == 3
    assert set(d) >= {"demands", "V", "queries", "present", "download_bits", "success"}


def test_seed_env(monkeypatch):
    monkeypatch.setenv(rng.SEED_ENV, "5")
    assert rng.default_seed() == 5
    monkeypatch.delenv(rng.SEED_ENV)
    assert rng.default_seed() == rng.DEFAULT_SEED


@pytest.mark.parametrize("pda,B,N", [
    (TINY, 2, 2), (TINY, 3, 3), (trivial_pda(), 3, 3), (single_user_pda(2, 1), 2, 4),
    (man_pda(ManParams(3, 1)), 2, 3), (man_pda(ManParams(3, 2)), 3, 2),
])
def test_enumerated_rounds_equal_formula(pda, B, N):
    c = cfg(pda, B, N, L=16)
    d = list(np.arange(pda.K) % N)
    mean, per, ok = enumerate_rounds(c, d)
    assert ok
    assert mean == theorem1_rate(pda, B, N).scheme_rate
