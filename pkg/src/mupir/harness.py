"""Experiment driver: rate estimation and privacy audits.

Exhaustive mode walks every realization of the users' randomness
(B^{K(N-1)} of them) through the real query builder and the server-0
suppression rule, so its mean is an independent check on the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import kernels, rng
from .analysis import theorem1_rate
from .protocol import (FileSet, QueryBuilder, SystemConfig, build_queries, label_structure,
                       run_round, uncoded_delivery)

__all__ = [
    "DEFAULT_CAP", "CapExceeded", "ExperimentPlan", "RateEstimate", "estimate_rate",
    "enumerate_rounds", "ServerPrivacy", "PrivacyReport", "privacy_audit_exact",
    "privacy_audit_empirical", "leaky_build_queries", "iter_realizations",
]

DEFAULT_CAP = 2 ** 20
_CHUNK = 1 << 15
_MC_BLOCK = 4096


class CapExceeded(ValueError):
    """Exhaustive enumeration would exceed the realization cap."""


@dataclass(frozen=True)
class ExperimentPlan:
    config: SystemConfig
    trials: int = 1000
    mode: str = "monte_carlo"  # or "exhaustive"
    demands: Optional[tuple[int, ...]] = None  # None: uniform demands
    delivery: str = "pda"  # or "uncoded"
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.mode not in ("monte_carlo", "exhaustive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.delivery not in ("pda", "uncoded"):
            raise ValueError(f"unknown delivery {self.delivery!r}")
        if self.mode == "monte_carlo" and self.trials < 1:
            raise ValueError("trials must be positive")
        if self.demands is not None and len(self.demands) != self.config.K:
            raise ValueError(f"need {self.config.K} demands")

    @property
    def realizations(self) -> int:
        c = self.config
        count = c.B ** (c.K * (c.N - 1))
        return count if self.demands is not None else count * c.N ** c.K


def iter_realizations(K: int, width: int, B: int, chunk: int = _CHUNK) -> Iterator[np.ndarray]:
    """Yield every array in [0:B-1]^{K x width}, in mixed-radix order, in chunks of shape (T, K, width)."""
    total = B ** (K * width)
    digits = K * width
    if digits == 0:
        # N = 1: the single empty realization
        yield np.zeros((1, K, width), dtype=np.int64)
        return
    weights = B ** np.arange(digits - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield ((idx[:, None] // weights) % B).reshape(-1, K, width)


def _demand_vectors(config: SystemConfig, demands) -> list[np.ndarray]:
    if demands is not None:
        return [np.asarray(demands, dtype=np.int64)]
    return [np.asarray(d, dtype=np.int64)
            for d in np.ndindex(*([config.N] * config.K))]


@dataclass
class RateEstimate:
    mode: str
    mean: Union[Fraction, float]
    per_server: list[Union[Fraction, float]]
    half_width: float
    samples: int
    analytic: Fraction
    variance: Union[Fraction, float] = 0.0
    present_hist: Optional[list[int]] = None  # exhaustive: realizations by number of server-0 entries sent
    resolution: float = 0.0  # Monte Carlo: shift that could go unobserved in this many samples

    @property
    def matches_analytic(self) -> bool:
        if isinstance(self.mean, Fraction):
            return self.mean == self.analytic
        # 3 half-widths, plus a rule-of-three allowance for suppression events too rare to be sampled
        return abs(self.mean - float(self.analytic)) <= 3 * self.half_width + self.resolution


def _server0_present(config: SystemConfig, V: np.ndarray, demands: np.ndarray,
                     builder: QueryBuilder = build_queries) -> np.ndarray:
    _, indptr, indices = label_structure(config.pda)
    Q = builder(V, demands, config.B)
    return kernels.presence(Q[:, 0], indptr, indices)


def estimate_rate(plan: ExperimentPlan) -> RateEstimate:
    """Mean total rate and per-server split, exact (exhaustive) or sampled (Monte Carlo)."""
    c = plan.config
    pda = c.pda
    if plan.delivery == "uncoded":
        files = FileSet(np.zeros((c.N, c.padded_bytes), dtype=np.uint8), c.file_bytes)
        per = [Fraction(bc.payload_bits, c.L_bits) for bc in uncoded_delivery(c, files)]
        total = sum(per, Fraction(0))
        return RateEstimate(plan.mode, total, per, 0.0, 1, total, Fraction(0))

    analytic = theorem1_rate(pda, c.B, c.N).scheme_rate
    denom = c.F * (c.B - 1)
    other = Fraction(pda.S, denom)  # servers 1..B-1 always send all S entries

    if plan.mode == "exhaustive":
        if plan.realizations > plan.cap:
            raise CapExceeded(f"{plan.realizations} realizations exceed cap {plan.cap}; use monte_carlo")
        hist = np.zeros(pda.S + 1, dtype=np.int64)
        for d in _demand_vectors(c, plan.demands):
            for V in iter_realizations(c.K, c.N - 1, c.B):
                counts = _server0_present(c, V, d).sum(axis=1)
                hist += np.bincount(counts, minlength=pda.S + 1)
        n = int(hist.sum())
        sent = sum(i * int(h) for i, h in enumerate(hist))
        r0 = Fraction(sent, n * denom)
        second = Fraction(sum(i * i * int(h) for i, h in enumerate(hist)), n * denom ** 2)
        return RateEstimate("exhaustive", r0 + (c.B - 1) * other, [r0] + [other] * (c.B - 1),
                            0.0, n, analytic, second - r0 ** 2, hist.tolist())

    counts = []
    for block in range(-(-plan.trials // _MC_BLOCK)):
        size = min(_MC_BLOCK, plan.trials - block * _MC_BLOCK)
        gen = rng.stream(c.seed, rng.TRIALS, block)
        V = rng.uniform_symbols(gen, c.B, (size, c.K, c.N - 1))
        d = (np.asarray(plan.demands, dtype=np.int64) if plan.demands is not None
             else gen.integers(0, c.N, size=(size, c.K)))
        counts.append(_server0_present(c, V, d).sum(axis=1))
    r0 = np.concatenate(counts) / denom
    n = r0.size
    mean0 = float(r0.mean())
    sd = float(r0.std(ddof=1)) if n > 1 else 0.0
    return RateEstimate("monte_carlo", mean0 + (c.B - 1) * float(other),
                        [mean0] + [float(other)] * (c.B - 1),
                        1.96 * sd / math.sqrt(n), n, analytic, sd ** 2,
                        resolution=3 * pda.S / (denom * n))


def enumerate_rounds(config: SystemConfig, demands, files: Optional[FileSet] = None,
                     cap: int = 4096) -> tuple[Fraction, list[Fraction], bool]:
    """Run a full byte-level round for every V realization; return (mean rate, per-server means, all decoded)."""
    total = config.B ** (config.K * (config.N - 1))
    if total > cap:
        raise CapExceeded(f"{total} rounds exceed cap {cap}")
    files = files or FileSet.random(config)
    bits = np.zeros(config.B, dtype=object)
    ok = True
    for chunk in iter_realizations(config.K, config.N - 1, config.B):
        for V in chunk:
            tr = run_round(config, files, demands, V=V)
            bits += np.array(tr.download_bits, dtype=object)
            ok = ok and all(tr.success)
    per = [Fraction(int(x), total * config.L_bits) for x in bits]
    return sum(per, Fraction(0)), per, ok


def leaky_build_queries(V: np.ndarray, demands: np.ndarray, B: int) -> np.ndarray:
    """Deliberately broken builder that skips randomization, so queries reveal demands.

    Shipped so the audits can be shown to catch a leak.
    """
    return build_queries(np.zeros_like(np.asarray(V)), demands, B)


@dataclass
class ServerPrivacy:
    server: int
    tv: Union[Fraction, float]  # worst total-variation distance over demand vectors
    uniform: Optional[bool] = None  # exact: every tuple at B^{-K(N-1)}
    min_p_value: Optional[float] = None
    sum_violations: int = 0
    flagged: bool = False


@dataclass
class PrivacyReport:
    method: str  # "exact" or "empirical"
    scope: str  # "joint" or "marginal"
    demands: list[list[int]]
    servers: list[ServerPrivacy]
    samples: int
    domain: int
    alpha: Optional[float] = None

    @property
    def max_tv(self):
        return max(s.tv for s in self.servers)

    @property
    def private(self) -> bool:
        return not any(s.flagged for s in self.servers)


def _check_demand_list(config: SystemConfig, demands: Sequence[Sequence[int]]) -> list[np.ndarray]:
    out = []
    for d in demands:
        a = np.asarray(d, dtype=np.int64)
        if a.shape != (config.K,) or ((a < 0) | (a >= config.N)).any():
            raise ValueError(f"bad demand vector {list(d)} for K={config.K}, N={config.N}")
        out.append(a)
    if len({tuple(a) for a in out}) < min(2, config.N ** config.K):
        raise ValueError("need at least two distinct demand vectors")
    return out


def privacy_audit_exact(config: SystemConfig, demands: Sequence[Sequence[int]],
                        builder: QueryBuilder = build_queries,
                        cap: int = DEFAULT_CAP) -> PrivacyReport:
    """Exact per-server distribution of the joint query tuple under each demand vector.

    Each distribution must put mass B^{-K(N-1)} on every tuple of Q_b^K; the
    reported distance is the largest total variation between a conditional
    distribution and their mixture.
    """
    dvecs = _check_demand_list(config, demands)
    B, K, N = config.B, config.K, config.N
    domain = B ** (K * (N - 1))
    if domain > cap:
        raise CapExceeded(f"{domain} realizations exceed cap {cap}; use the empirical audit")
    hists = np.zeros((len(dvecs), B, domain), dtype=np.int64)
    bad = np.zeros(B, dtype=np.int64)
    for i, d in enumerate(dvecs):
        for V in iter_realizations(K, N - 1, B):
            Q = builder(V, d, B)  # (T, B, K, N)
            for b in range(B):
                qb = Q[:, b]
                bad[b] += int((qb.sum(axis=2) % B != b).any(axis=1).sum())
                hists[i, b] += np.bincount(kernels.encode_queries(qb, B), minlength=domain)
    servers = []
    for b in range(B):
        mix = hists[:, b].sum(axis=0)
        tv = Fraction(0)
        for i in range(len(dvecs)):
            # |p_i - mix/m| with p_i = h_i/domain and mix summing to m*domain
            diff = np.abs(hists[i, b] * len(dvecs) - mix)
            tv = max(tv, Fraction(int(diff.sum()), 2 * domain * len(dvecs)))
        uniform = bool((hists[:, b] == 1).all())
        servers.append(ServerPrivacy(b, tv, uniform=uniform, sum_violations=int(bad[b]),
                                     flagged=bool(tv != 0 or not uniform or bad[b])))
    return PrivacyReport("exact", "joint", [d.tolist() for d in dvecs], servers, domain, domain)


def privacy_audit_empirical(config: SystemConfig, demands: Sequence[Sequence[int]], samples: int,
                            builder: QueryBuilder = build_queries, alpha: float = 1e-6,
                            joint_limit: int = 0) -> PrivacyReport:
    """Sampled query histograms per demand vector, tested against the uniform law on Q_b.

    Per-user marginals (domain B^{N-1}) are used unless the joint domain is at
    most ``joint_limit``. A chi-square p-value below ``alpha`` flags the server.
    """
    if samples < 1000:
        raise ValueError("empirical audit needs at least 1000 samples")
    dvecs = _check_demand_list(config, demands)
    B, K, N = config.B, config.K, config.N
    joint = B ** (K * (N - 1)) <= joint_limit
    groups = [list(range(K))] if joint else [[k] for k in range(K)]
    domain = B ** (len(groups[0]) * (N - 1))
    hists = np.zeros((len(dvecs), B, len(groups), domain), dtype=np.int64)
    bad = np.zeros(B, dtype=np.int64)
    for i, d in enumerate(dvecs):
        gen = rng.stream(config.seed, rng.TRIALS, 1_000_000 + i)
        V = rng.uniform_symbols(gen, B, (samples, K, N - 1))
        Q = builder(V, d, B)
        for b in range(B):
            qb = Q[:, b]
            bad[b] += int((qb.sum(axis=2) % B != b).any(axis=1).sum())
            for g, users in enumerate(groups):
                hists[i, b, g] = np.bincount(kernels.encode_queries(qb[:, users], B), minlength=domain)
    servers = []
    for b in range(B):
        p_min = 1.0
        tv = 0.0
        for i in range(len(dvecs)):
            for g in range(len(groups)):
                h = hists[i, b, g]
                p_min = min(p_min, float(stats.chisquare(h).pvalue)) if domain > 1 else p_min
                tv = max(tv, 0.5 * float(np.abs(h / samples - 1 / domain).sum()))
        servers.append(ServerPrivacy(b, tv, min_p_value=p_min, sum_violations=int(bad[b]),
                                     flagged=bool(p_min < alpha or bad[b])))
    return PrivacyReport("empirical", "joint" if joint else "marginal",
                         [d.tolist() for d in dvecs], servers, samples, domain, alpha)
