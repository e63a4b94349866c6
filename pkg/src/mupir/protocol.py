"""Placement, private query generation, server answers and decoding.

Packets are byte strings and packet addition is bytewise XOR, so "+" and "-"
coincide and the decoding identities hold verbatim. Files are zero-padded to
a multiple of F(B-1) bytes; rates are measured against the padded length.

Indices are 0-based internally: users ``k``, rows ``f``, files ``n``, servers
``b``. PDA labels ``s`` stay 1-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels, rng
from .pda import Pda, require_valid

__all__ = [
    "ProtocolError", "SystemConfig", "FileSet", "CacheContent", "QueryVector",
    "Broadcast", "UncodedBroadcast", "RoundTranscript", "build_queries",
    "place", "place_uncoded", "gen_queries", "server_answer", "decode",
    "uncoded_delivery", "decode_uncoded", "run_round", "encode_query",
    "decode_query", "label_structure",
]


class ProtocolError(ValueError):
    """A party received input that violates the protocol (bad query, missing answer...)."""


@dataclass(frozen=True)
class SystemConfig:
    B: int
    N: int
    pda: Pda
    file_bytes: int
    seed: int = rng.DEFAULT_SEED
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.B < 2:
            raise ValueError(f"need at least 2 servers, got B={self.B}")
        if self.N < 1:
            raise ValueError(f"need at least one file, got N={self.N}")
        if self.file_bytes < 1:
            raise ValueError("file_bytes must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        # strict=False admits arrays violating C1-C3 so failures can be observed
        if self.strict:
            require_valid(self.pda)

    @property
    def K(self) -> int:
        return self.pda.K

    @property
    def F(self) -> int:
        return self.pda.F

    @property
    def subpacketization(self) -> int:
        return self.F * (self.B - 1)

    @property
    def packet_bytes(self) -> int:
        return -(-self.file_bytes // self.subpacketization)

    @property
    def padded_bytes(self) -> int:
        return self.packet_bytes * self.subpacketization

    @property
    def L_bits(self) -> int:
        """File length L in bits after padding."""
        return 8 * self.padded_bytes


@dataclass(frozen=True, eq=False)
class FileSet:
    """N equal-length files, zero-padded; ``data`` has shape (N, padded_bytes)."""

    data: np.ndarray
    original_bytes: int

    def __post_init__(self):
        self.data.setflags(write=False)

    @classmethod
    def from_bytes(cls, files: Sequence[bytes], config: SystemConfig) -> "FileSet":
        if len(files) != config.N:
            raise ValueError(f"expected {config.N} files, got {len(files)}")
        lengths = {len(f) for f in files}
        if lengths != {config.file_bytes}:
            raise ValueError(f"all files must be {config.file_bytes} bytes, got lengths {sorted(lengths)}")
        data = np.zeros((config.N, config.padded_bytes), dtype=np.uint8)
        for n, f in enumerate(files):
            data[n, : len(f)] = np.frombuffer(f, dtype=np.uint8)
        return cls(data, config.file_bytes)

    @classmethod
    def random(cls, config: SystemConfig, round_index: int = 0) -> "FileSet":
        gen = rng.stream(config.seed, rng.FILES, round_index)
        data = np.zeros((config.N, config.padded_bytes), dtype=np.uint8)
        data[:, : config.file_bytes] = gen.integers(0, 256, size=(config.N, config.file_bytes), dtype=np.uint8)
        return cls(data, config.file_bytes)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def original_length(self) -> int:
        return 8 * self.original_bytes

    @property
    def pad_length(self) -> int:
        return 8 * (self.data.shape[1] - self.original_bytes)

    def original(self, n: int) -> bytes:
        return self.data[n, : self.original_bytes].tobytes()

    def packets(self, config: SystemConfig) -> np.ndarray:
        """View of shape (N, F, B-1, packet_bytes); packet b' of subfile f is ``[n, f, b'-1]``."""
        if self.data.shape[1] != config.padded_bytes or self.N != config.N:
            raise ProtocolError("file set does not match the configuration (unpadded or wrong N)")
        return self.data.reshape(config.N, config.F, config.B - 1, config.packet_bytes)


@dataclass(frozen=True, eq=False)
class CacheContent:
    """Subfiles held by one user: ``packets[n, i]`` is subfile ``rows[i]`` of file n."""

    user: int
    rows: tuple[int, ...]
    packets: np.ndarray  # (N, len(rows), B-1, P)

    @property
    def row_index(self) -> dict[int, int]:
        return {f: i for i, f in enumerate(self.rows)}

    @property
    def num_subfiles(self) -> int:
        return self.packets.shape[0] * len(self.rows)

    @property
    def size_bits(self) -> int:
        return 8 * self.packets.size

    def subfile(self, n: int, f: int) -> np.ndarray:
        return self.packets[n, self.row_index[f]]


@dataclass(frozen=True)
class QueryVector:
    """User k's query to server b; coordinates sum to b modulo B."""

    user: int
    server: int
    symbols: tuple[int, ...]

    def to_wire(self, B: int) -> bytes:
        return encode_query(self.symbols, B)

    @classmethod
    def from_wire(cls, data: bytes, user: int, server: int, N: int, B: int) -> "QueryVector":
        return cls(user, server, tuple(decode_query(data, N, B, server)))


def _symbol_width(B: int) -> int:
    return max(1, math.ceil(math.log2(B)))


def encode_query(symbols: Sequence[int], B: int) -> bytes:
    """Pack the first N-1 symbols at ceil(log2 B) bits each; the last one is implied by the sum."""
    w = _symbol_width(B)
    acc = 0
    body = list(symbols)[:-1]
    for x in body:
        if not 0 <= x < B:
            raise ProtocolError(f"query symbol {x} outside [0:{B - 1}]")
        acc = (acc << w) | int(x)
    nbits = w * len(body)
    nbytes = -(-nbits // 8)
    return (acc << (8 * nbytes - nbits)).to_bytes(nbytes, "big") if nbytes else b""


def decode_query(data: bytes, N: int, B: int, server: int) -> list[int]:
    w = _symbol_width(B)
    nbits = w * (N - 1)
    nbytes = -(-nbits // 8)
    if len(data) != nbytes:
        raise ProtocolError(f"query is {len(data)} bytes, expected {nbytes}")
    acc = int.from_bytes(data, "big") >> (8 * nbytes - nbits) if nbytes else 0
    body = []
    for i in range(N - 1):
        x = (acc >> (w * (N - 2 - i))) & ((1 << w) - 1)
        if x >= B:
            raise ProtocolError(f"query symbol {x} outside [0:{B - 1}]")
        body.append(x)
    return body + [(server - sum(body)) % B]


@dataclass(frozen=True, eq=False)
class Broadcast:
    """Answer of one server: coded packets ``X_{b,s}`` and the presence bitmap."""

    server: int
    present: tuple[bool, ...]
    packets: np.ndarray  # (S, P); rows of absent entries are zero and never sent

    def get(self, s: int) -> np.ndarray:
        """X_{b,s}; a suppressed entry reads as the zero packet."""
        return self.packets[s - 1]

    @property
    def present_labels(self) -> list[int]:
        return [s for s, p in enumerate(self.present, start=1) if p]

    @property
    def payload_bits(self) -> int:
        return 8 * self.packets.shape[1] * sum(self.present)

    @property
    def bitmap_bits(self) -> int:
        return len(self.present) if self.server == 0 else 0

    def to_bytes(self) -> bytes:
        """Wire form: server 0 prefixes an S-bit bitmap; then the present packets in label order."""
        head = b""
        if self.server == 0:
            bits = "".join("1" if p else "0" for p in self.present)
            nbytes = -(-len(bits) // 8)
            head = int(bits.ljust(8 * nbytes, "0") or "0", 2).to_bytes(nbytes, "big") if nbytes else b""
        body = b"".join(self.packets[s - 1].tobytes() for s in self.present_labels)
        return head + body


@lru_cache(maxsize=256)
def label_structure(pda: Pda):
    """Per label s: (rows, users) arrays of its cells, and the CSR form of the sets K_s."""
    cells = pda.label_cells()
    per_label = {}
    indptr = [0]
    indices: list[int] = []
    for s in range(1, pda.S + 1):
        fk = cells[s]
        per_label[s] = (np.array([f for f, _ in fk], dtype=np.int64),
                        np.array([k for _, k in fk], dtype=np.int64))
        members = sorted({k for _, k in fk})
        indices.extend(members)
        indptr.append(len(indices))
    return per_label, np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64)


def place(config: SystemConfig, files: FileSet) -> list[CacheContent]:
    """Fill each user's cache with subfile f of every file whenever P[f, k] is a star."""
    pk = files.packets(config)
    caches = []
    for k in range(config.K):
        rows = tuple(config.pda.star_rows(k))
        caches.append(CacheContent(k, rows, np.ascontiguousarray(pk[:, list(rows)])))
    return caches


def place_uncoded(config: SystemConfig, files: FileSet) -> list[CacheContent]:
    """Alternative placement: every user caches the same first Z subfiles of every file."""
    pk = files.packets(config)
    rows = tuple(range(config.pda.Z))
    return [CacheContent(k, rows, np.ascontiguousarray(pk[:, list(rows)])) for k in range(config.K)]


QueryBuilder = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def build_queries(V: np.ndarray, demands: np.ndarray, B: int) -> np.ndarray:
    """Queries of shape (..., B, K, N) from randomness V of shape (..., K, N-1).

    Coordinate ``d_k`` of user k's query to server b is ``(b - sum V^k) mod B``;
    the other coordinates are ``V^k`` in order. ``demands`` broadcasts against
    ``V.shape[:-1]``.
    """
    V = np.asarray(V, dtype=np.int64)
    demands = np.asarray(demands, dtype=np.int64)
    *batch, K, Nm1 = V.shape
    N = Nm1 + 1
    total = V.sum(axis=-1) % B  # (..., K)
    servers = np.arange(B, dtype=np.int64).reshape((B,) + (1,) * (len(batch) + 1))
    free = np.moveaxis((servers - total[None]) % B, 0, -2)  # (..., B, K)
    ext = np.concatenate(
        [np.broadcast_to(V[..., None, :, :], (*batch, B, K, Nm1)), free[..., None]], axis=-1)
    n = np.arange(N, dtype=np.int64)
    d = np.broadcast_to(demands, (*batch, K))[..., None]  # (..., K, 1)
    idx = np.where(n < d, n, np.where(n == d, Nm1, n - 1))  # (..., K, N)
    idx = np.broadcast_to(idx[..., None, :, :], (*batch, B, K, N))
    return np.take_along_axis(ext, idx, axis=-1)


def _check_demands(config: SystemConfig, demands) -> np.ndarray:
    d = np.asarray(demands, dtype=np.int64)
    if d.shape != (config.K,):
        raise ValueError(f"expected {config.K} demands, got shape {d.shape}")
    if ((d < 0) | (d >= config.N)).any():
        raise ValueError(f"demands must lie in [0:{config.N - 1}], got {d.tolist()}")
    return d


def gen_queries(config: SystemConfig, demands, round_index: int = 0,
                V: Optional[np.ndarray] = None,
                builder: QueryBuilder = build_queries) -> tuple[np.ndarray, np.ndarray]:
    """Draw (or accept) each user's randomness V^k and build all B*K queries.

    Returns ``(V, Q)`` with V of shape (K, N-1) and Q of shape (B, K, N).
    """
    d = _check_demands(config, demands)
    if V is None:
        V = np.stack([rng.uniform_symbols(rng.stream(config.seed, rng.QUERY, round_index, k),
                                          config.B, config.N - 1)
                      for k in range(config.K)])
    V = np.asarray(V, dtype=np.int64).reshape(config.K, config.N - 1)
    if ((V < 0) | (V >= config.B)).any():
        raise ValueError("V symbols must lie in [0:B-1]")
    return V, builder(V, d, config.B)


def _check_queries(config: SystemConfig, b: int, queries: np.ndarray) -> np.ndarray:
    q = np.asarray(queries, dtype=np.int64)
    if q.shape != (config.K, config.N):
        raise ProtocolError(f"server {b} expected {config.K} queries of length {config.N}, got {q.shape}")
    if ((q < 0) | (q >= config.B)).any():
        raise ProtocolError(f"server {b}: query symbol outside [0:{config.B - 1}]")
    bad = np.nonzero(q.sum(axis=1) % config.B != b)[0]
    if bad.size:
        raise ProtocolError(f"server {b}: queries of users {(bad + 1).tolist()} do not sum to {b} mod {config.B}")
    return q


def server_answer(config: SystemConfig, files: FileSet, b: int, queries) -> Broadcast:
    """Compute ``X_{b,s}`` for every label; server 0 drops entries fixed at zero by the queries."""
    q = _check_queries(config, b, queries)
    pk = files.packets(config)
    per_label, _, _ = label_structure(config.pda)
    S = config.pda.S
    out = np.zeros((S, config.packet_bytes), dtype=np.uint8)
    present = []
    for s in range(1, S + 1):
        rows, users = per_label[s]
        send = b != 0 or bool(q[users].any())
        present.append(send)
        if send:
            out[s - 1] = kernels.xor_answer(pk, rows, users, q)
    out.setflags(write=False)
    return Broadcast(b, tuple(present), out)


def decode(config: SystemConfig, k: int, d_k: int, cache: CacheContent, V_k,
           queries: np.ndarray, broadcasts: Sequence[Broadcast]) -> bytes:
    """Recover file ``d_k`` for user k from its cache, all queries and the B broadcasts.

    ``queries`` has shape (B, K, N); the other users' queries are needed to
    cancel their terms in each coded packet.
    """
    B, P, pda = config.B, config.packet_bytes, config.pda
    by_server = {bc.server: bc for bc in broadcasts}
    if sorted(by_server) != list(range(B)):
        raise ProtocolError(f"need broadcasts from servers 0..{B - 1}, got {sorted(by_server)}")
    for bc in broadcasts:
        if bc.packets.shape != (pda.S, P):
            raise ProtocolError(f"broadcast of server {bc.server} has inconsistent packet size")
    q = np.asarray(queries, dtype=np.int64)
    vbar = int(np.sum(V_k)) % B
    local = cache.row_index
    per_label, _, _ = label_structure(pda)
    out = np.empty((pda.F, B - 1, P), dtype=np.uint8)
    for f in range(pda.F):
        s = pda.cell(f, k)
        if s is None:
            out[f] = cache.packets[d_k, local[f]]
            continue
        rows, users = per_label[s]
        other = ~((rows == f) & (users == k))
        try:
            lrows = np.array([local[int(r)] for r in rows[other]], dtype=np.int64)
        except KeyError as e:
            raise ProtocolError(f"user {k}: interfering subfile {e} not cached (PDA violates C3)") from None
        A = [by_server[b].get(s) ^ kernels.xor_answer(cache.packets, lrows, users[other], q[b])
             for b in range(B)]
        for bp in range(1, B):
            out[f, bp - 1] = A[(bp + vbar) % B] ^ A[vbar]
    return out.tobytes()[: config.file_bytes]


@dataclass(frozen=True, eq=False)
class UncodedBroadcast:
    """A contiguous slice of the uncached library portion, sent by one server."""

    server: int
    start: int
    payload: np.ndarray

    @property
    def payload_bits(self) -> int:
        return 8 * self.payload.size


def uncoded_delivery(config: SystemConfig, files: FileSet) -> list[UncodedBroadcast]:
    """Broadcast the uncached (1 - Z/F) tail of every file, split evenly over the B servers."""
    pk = files.packets(config)
    tail = np.ascontiguousarray(pk[:, config.pda.Z:]).reshape(-1)
    bounds = np.linspace(0, tail.size, config.B + 1).round().astype(int)
    return [UncodedBroadcast(b, int(bounds[b]), tail[bounds[b]:bounds[b + 1]]) for b in range(config.B)]


def decode_uncoded(config: SystemConfig, d_k: int, cache: CacheContent,
                   broadcasts: Sequence[UncodedBroadcast]) -> bytes:
    tail = np.concatenate([bc.payload for bc in sorted(broadcasts, key=lambda x: x.start)])
    per_file = (config.F - config.pda.Z) * (config.B - 1) * config.packet_bytes
    head = cache.packets[d_k].reshape(-1)
    body = tail[d_k * per_file:(d_k + 1) * per_file]
    return np.concatenate([head, body]).tobytes()[: config.file_bytes]


@dataclass
class RoundTranscript:
    mode: str
    seed: int
    round_index: int
    B: int
    N: int
    K: int
    demands: list[int]
    V: list[list[int]]
    queries: list[list[list[int]]]  # [b][k][n]
    present: list[list[int]]  # per server, 1-based labels sent
    download_bits: list[int]
    bitmap_bits: int
    L_bits: int
    original_length: int
    pad_length: int
    subpacketization: int
    upload_symbols: int  # number of free symbols sent, B*K*(N-1)
    upload_wire_bits: int
    success: list[bool]
    decoded: list[bytes] = field(default_factory=list, repr=False)
    raw_broadcasts: Optional[list[str]] = field(default=None, repr=False)

    @property
    def upload_bits(self) -> float:
        """Analytic upload cost: B*K*(N-1)*log2(B) bits."""
        return self.upload_symbols * math.log2(self.B) if self.upload_symbols else 0.0

    @property
    def total_download_bits(self) -> int:
        return sum(self.download_bits)

    @property
    def rate(self) -> Fraction:
        return Fraction(self.total_download_bits, self.L_bits)

    @property
    def server_rates(self) -> list[Fraction]:
        return [Fraction(x, self.L_bits) for x in self.download_bits]

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode, "seed": self.seed, "round": self.round_index,
            "B": self.B, "N": self.N, "K": self.K,
            "demands": self.demands, "V": self.V, "queries": self.queries,
            "present": self.present,
            "download_bits": self.download_bits,
            "total_download_bits": self.total_download_bits,
            "bitmap_bits": self.bitmap_bits,
            "L_bits": self.L_bits,
            "original_length_bits": self.original_length,
            "pad_length_bits": self.pad_length,
            "rate": f"{self.rate.numerator}/{self.rate.denominator}",
            "subpacketization": self.subpacketization,
            "upload_bits_analytic": self.upload_bits,
            "upload_symbols": self.upload_symbols,
            "upload_wire_bits": self.upload_wire_bits,
            "success": self.success,
        }
        if self.raw_broadcasts is not None:
            out["raw_broadcasts"] = self.raw_broadcasts
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def run_round(config: SystemConfig, files: FileSet, demands, round_index: int = 0,
              V: Optional[np.ndarray] = None, mode: str = "pda",
              keep_broadcasts: bool = False) -> RoundTranscript:
    """One full round: placement, queries over the wire, answers, decoding and metering."""
    d = _check_demands(config, demands)
    common = dict(seed=config.seed, round_index=round_index, B=config.B, N=config.N, K=config.K,
                  demands=d.tolist(), L_bits=config.L_bits, original_length=files.original_length,
                  pad_length=files.pad_length, subpacketization=config.subpacketization)
    if mode == "uncoded":
        caches = place_uncoded(config, files)
        sent = uncoded_delivery(config, files)
        decoded = [decode_uncoded(config, int(d[k]), caches[k], sent) for k in range(config.K)]
        return RoundTranscript(
            mode=mode, V=[], queries=[], present=[[] for _ in sent],
            download_bits=[bc.payload_bits for bc in sent], bitmap_bits=0,
            upload_symbols=0, upload_wire_bits=0,
            success=[decoded[k] == files.original(int(d[k])) for k in range(config.K)],
            decoded=decoded,
            raw_broadcasts=[bc.payload.tobytes().hex() for bc in sent] if keep_broadcasts else None,
            **common)
    if mode != "pda":
        raise ValueError(f"unknown mode {mode!r}")

    caches = place(config, files)
    V, Q = gen_queries(config, d, round_index, V)
    # queries travel over the wire; servers rebuild the implied last coordinate
    wire_bits = 0
    received = np.empty_like(Q)
    for b in range(config.B):
        for k in range(config.K):
            qv = QueryVector(k, b, tuple(int(x) for x in Q[b, k]))
            data = qv.to_wire(config.B)
            wire_bits += _symbol_width(config.B) * (config.N - 1)
            received[b, k] = QueryVector.from_wire(data, k, b, config.N, config.B).symbols
    broadcasts = [server_answer(config, files, b, received[b]) for b in range(config.B)]
    decoded = []
    for k in range(config.K):
        try:
            decoded.append(decode(config, k, int(d[k]), caches[k], V[k], received, broadcasts))
        except ProtocolError:
            decoded.append(b"")
    return RoundTranscript(
        mode=mode, V=V.tolist(), queries=Q.tolist(),
        present=[bc.present_labels for bc in broadcasts],
        download_bits=[bc.payload_bits for bc in broadcasts],
        bitmap_bits=broadcasts[0].bitmap_bits,
        upload_symbols=config.B * config.K * (config.N - 1),
        upload_wire_bits=wire_bits,
        success=[decoded[k] == files.original(int(d[k])) for k in range(config.K)],
        decoded=decoded,
        raw_broadcasts=[bc.to_bytes().hex() for bc in broadcasts] if keep_broadcasts else None,
        **common)
