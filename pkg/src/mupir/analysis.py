"""Closed-form rate, subpacketization and upload-cost formulas.

All rates are exact :class:`fractions.Fraction` values; floats only appear in
upload costs (which carry a log2 factor) and at reporting time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Optional

from .pda import Pda, PdaValidityWarning, occupancy, validate

__all__ = [
    "SchemeMetrics", "r_pir_sum", "r_pir_tail", "theorem1_rate", "regular_rate",
    "man_metrics", "product_design_metrics", "uncoded_metrics", "cia_rate",
    "cc_rates", "cc_rate_envelope", "order_optimality_check", "OptimalityReport",
    "ratio_asymptotics", "log2_factorial_ratio", "qyan_rates", "emit_figure_data",
]


@dataclass(frozen=True)
class SchemeMetrics:
    """Rate, subpacketization and upload cost of one scheme at one operating point.

    ``rate = min(fallback_rate, scheme_rate)`` where ``fallback_rate`` is the
    uncoded N - M option; both operands are kept for crossover plots. Upload
    cost is ``upload_count * log2(upload_base)`` when ``upload_base`` is set,
    otherwise ``upload_bits`` carries it directly.
    """

    scheme: str
    rate: Fraction
    scheme_rate: Fraction
    fallback_rate: Fraction
    subpacketization: int
    upload_bits: float
    upload_count: int = 0
    upload_base: Optional[int] = None

    def __post_init__(self):
        if self.rate < 0 or self.subpacketization < 1 or self.upload_bits < 0:
            raise ValueError(f"inconsistent metrics {self}")

    @property
    def rate_float(self) -> float:
        return float(self.rate)


def r_pir_sum(B: int, terms: int) -> Fraction:
    """sum_{i=0}^{terms} B^{-i}, exactly."""
    if B < 2:
        raise ValueError("B must be at least 2")
    if terms < 0:
        return Fraction(0)
    # closed form of the geometric partial sum
    return Fraction(B ** (terms + 1) - 1, (B - 1) * B ** terms)


def r_pir_tail(B: int, terms: int) -> Fraction:
    """sum_{i=1}^{terms} B^{-i}: the expected share of server 0 per label."""
    return r_pir_sum(B, terms) - 1


def _upload(B: int, K: int, N: int) -> tuple[int, float]:
    count = B * K * (N - 1)
    return count, count * math.log2(B)


def theorem1_rate(pda: Pda, B: int, N: int) -> SchemeMetrics:
    """Rate min{N-M, R}, subpacketization (B-1)F and upload BK(N-1)log2(B) for a PDA.

    The formula only needs the sets K_s, so an array violating C1-C3 is still
    evaluated, with a :class:`PdaValidityWarning` (the scheme is not correct on it).
    """
    report = validate(pda)
    if not report.valid:
        warnings.warn(f"rate formula evaluated on an invalid PDA: {report.summary()}",
                      PdaValidityWarning, stacklevel=2)
    if B < 2 or N < 1:
        raise ValueError("need B >= 2 and N >= 1")
    fallback = N - Fraction(N * pda.Z, pda.F)
    if pda.S == 0:
        R = Fraction(0)
    else:
        sizes = occupancy(pda, strict=False).sizes()
        R = Fraction(pda.S, pda.F) + Fraction(1, pda.F) * sum(
            (r_pir_tail(B, size * (N - 1)) for size in sizes.values()), Fraction(0))
    count, bits = _upload(B, pda.K, N)
    return SchemeMetrics("pda", min(fallback, R), R, fallback, (B - 1) * pda.F, bits, count, B)


def regular_rate(g: int, S: int, F: int, B: int, N: int) -> Fraction:
    """(S/F) * sum_{i=0}^{g(N-1)} B^{-i} for a g-regular PDA."""
    if g < 1:
        raise ValueError("g must be positive")
    return Fraction(S, F) * r_pir_sum(B, g * (N - 1))


def man_metrics(K: int, t: int, B: int, N: int) -> SchemeMetrics:
    """Table-form metrics of the scheme built on the MAN PDA with t = KM/N."""
    if not 0 <= t <= K:
        raise ValueError(f"t must lie in [0:{K}]")
    R = Fraction(K - t, t + 1) * r_pir_sum(B, (t + 1) * (N - 1)) if t < K else Fraction(0)
    fallback = N - Fraction(N * t, K)
    count, bits = _upload(B, K, N)
    return SchemeMetrics("pda", min(fallback, R), R, fallback, (B - 1) * comb(K, t), bits, count, B)


def _range_product(a: int, b: int) -> int:
    """Product of range(a, b) by balanced splitting (sequential products are quadratic)."""
    if b - a <= 32:
        return math.prod(range(a, b))
    mid = (a + b) // 2
    return _range_product(a, mid) * _range_product(mid, b)


def log2_factorial_ratio(B: int, N: int, exact: bool = False) -> float:
    """log2((B^N)! / (B^{N-1})!) = sum of log2 j over j in (B^{N-1}, B^N].

    Short ranges are summed term by term, long ones through lgamma. With
    ``exact=True`` the product is formed as a big integer (B^N <= 2^20 only).
    Returns ``inf`` once the value itself exceeds float range.
    """
    if N < 1:
        return 0.0
    lo, hi = B ** (N - 1), B ** N
    if exact:
        if hi > 2 ** 20:
            raise ValueError("exact path limited to B^N <= 2^20")
        return math.log2(_range_product(lo + 1, hi + 1))
    if hi - lo <= 2 ** 16:
        return math.fsum(math.log2(j) for j in range(lo + 1, hi + 1))
    if hi.bit_length() > 1000:
        return math.inf
    return (math.lgamma(hi + 1) - math.lgamma(lo + 1)) / math.log(2)


def product_design_metrics(K: int, t: int, B: int, N: int) -> SchemeMetrics:
    """Analytic metrics of the product-design baseline (its protocol is not implemented)."""
    if not 0 <= t <= K:
        raise ValueError(f"t must lie in [0:{K}]")
    R = Fraction(K - t, t + 1) * r_pir_sum(B, N - 1)
    fallback = N - Fraction(N * t, K)
    coded = (t + 1) * comb(K, t + 1) * B * N
    upload = coded * log2_factorial_ratio(B, N) if coded else 0.0
    return SchemeMetrics("product_design", min(fallback, R), R, fallback, B ** N * comb(K, t), upload)


def uncoded_metrics(K: int, F: int, Z: int, B: int, N: int) -> SchemeMetrics:
    """Same-fraction caching with uncoded delivery: rate N - M, no queries."""
    fallback = N - Fraction(N * Z, F)
    return SchemeMetrics("uncoded", fallback, fallback, fallback, F * (B - 1), 0.0)


def cia_rate(M: Fraction, B: int) -> Fraction:
    """Piecewise rate of the cache-aided interference alignment scheme (N = K = 2), for comparison only."""
    M = Fraction(M)
    if not 0 <= M <= 2:
        raise ValueError("CIA rate defined for 0 <= M <= 2")
    if M <= Fraction(B - 1, 2 * B):
        return 2 * (1 - M)
    if M <= Fraction(2 * (B - 1), 2 * B - 1):
        return Fraction(B + 1) * (3 - 2 * M) / (2 * B + 1)
    return (1 - M / 2) * (1 + Fraction(1, B))


def cc_rates(K: int, M, N: int) -> tuple[Fraction, dict[str, int]]:
    """R_cc(M) = K(1 - M/N)/(1 + KM/N) and the factors bounding it against the optimum.

    ``coded`` is the multiplicative gap to the optimal coded-caching rate,
    ``uncoded`` the gap under uncoded placement with N >= K.
    """
    mn = Fraction(M) / N
    if not 0 <= mn <= 1:
        raise ValueError("need 0 <= M <= N")
    return K * (1 - mn) / (1 + K * mn), {"coded": 4, "uncoded": 1}


def cc_rate_envelope(K: int, mn) -> Fraction:
    """Memory-sharing rate at cache ratio mn: interpolates R_cc between neighbouring integer t."""
    t = Fraction(mn) * K
    lo = math.floor(t)
    r_lo = Fraction(K - lo, lo + 1)
    if t == lo:
        return r_lo
    hi = lo + 1
    r_hi = Fraction(K - hi, hi + 1)
    return r_lo + (t - lo) * (r_hi - r_lo)


@dataclass(frozen=True)
class OptimalityReport:
    K: int
    N: int
    B: int
    t: int
    rate: Fraction
    cc_rate: Fraction
    ratio: Optional[Fraction]  # None when both rates vanish (t = K)
    bound: Fraction  # B/(B-1)

    @property
    def within_bound(self) -> bool:
        return self.ratio is None or self.ratio <= self.bound

    @property
    def factor2(self) -> bool:
        return self.within_bound and self.bound <= 2

    @property
    def factor8(self) -> bool:
        # R <= R_cc B/(B-1) = R*_ucc B/(B-1) <= 4 R*_cc B/(B-1) <= 8 R*_cc
        return self.within_bound and 4 * self.bound <= 8

    @property
    def holds(self) -> bool:
        return self.within_bound and self.factor2 and self.factor8


def order_optimality_check(K: int, N: int, B: int, t: int) -> OptimalityReport:
    """Compare the MAN-PDA rate R(M) with R_cc(M) at M = tN/K."""
    R = man_metrics(K, t, B, N).scheme_rate
    rcc, _ = cc_rates(K, Fraction(t * N, K), N)
    ratio = None if rcc == 0 else R / rcc
    return OptimalityReport(K, N, B, t, R, rcc, ratio, Fraction(B, B - 1))


def qyan_rates(q: int, m: int, B: int, N: int) -> dict[str, SchemeMetrics]:
    """Metrics of the scheme on the two low-subpacketization PDA families (K = q(m+1)).

    ``low``: (m+1)-(q(m+1), q^m, q^{m-1}, q^{m+1}-q^m), M/N = 1/q.
    ``high``: (q-1)(m+1)-(q(m+1), (q-1)q^m, (q-1)^2 q^{m-1}, q^m), M/N = 1 - 1/q.
    """
    K = q * (m + 1)
    count, bits = _upload(B, K, N)
    out = {}
    for tag, g, F, Z, S in (
        ("low", m + 1, q ** m, q ** (m - 1), q ** (m + 1) - q ** m),
        ("high", (q - 1) * (m + 1), (q - 1) * q ** m, (q - 1) ** 2 * q ** (m - 1), q ** m),
    ):
        R = regular_rate(g, S, F, B, N)
        fallback = N - Fraction(N * Z, F)
        out[tag] = SchemeMetrics("pda", min(fallback, R), R, fallback, (B - 1) * F, bits, count, B)
    return out


def ratio_asymptotics(q: int, m: int, B: int, N: int) -> tuple[Fraction, Fraction, float]:
    """(R_new/R_PD, F_new/F_PD, U_new/U_PD) for the M/N = 1/q family with K = q(m+1), t = m+1.

    Rates are compared before the min with N - M, as in the closed forms.
    """
    if q < 2 or m < 1:
        raise ValueError("need q >= 2 and m >= 1")
    K, t = q * (m + 1), m + 1
    rate_ratio = Fraction(m + 2, m + 1) * (1 - Fraction(1, B ** (m * N + N - m))) / (1 - Fraction(1, B ** N))
    f_ratio = Fraction((B - 1) * q ** m, B ** N * comb(K, t))
    if N == 1:
        u_ratio = 0.0
    else:
        u_ratio = (K / ((t + 1) * comb(K, t + 1))) * ((N - 1) / N) * (math.log2(B) / log2_factorial_ratio(B, N))
    return rate_ratio, f_ratio, u_ratio


def emit_figure_data(fig_id: str, **params):
    """Dataset (header, rows) behind a figure or table; see :mod:`mupir.figures`."""
    from .figures import emit_figure_data as _emit

    return _emit(fig_id, **params)
