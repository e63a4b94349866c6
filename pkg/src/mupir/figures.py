"""Comma-separated datasets behind the comparison figures and tables.

Every dataset is a header row plus data rows, produced only from the closed
forms in :mod:`mupir.analysis`. Column meanings:

fig2    rates vs M/N, MAN-PDA scheme and product design (B=2, N=4, K=4)
        mn, t, rate_pda, rate_pd, scheme_rate_pda, scheme_rate_pd, fallback_rate,
        rate_pda_exact, rate_pd_exact
fig3    upload costs in bits and their ratio U_pd/U_pda (same setting);
        ratio is empty at M/N = 1 where nothing is delivered and both costs are 0
fig4    rates vs M/N for the low-subpacketization PDAs (B=10, N=18, q=m=3, K=12)
fig5    rates vs K at M/N = 1/q (q=3, B=10, N=300), with the K -> inf limit
fig6    subpacketization vs K at M/N = 1/q (q=3, B=10, N=K)
fig7    upload cost vs K at M/N = 1/q (q=3, B=10, N=K)
table1  MAN-PDA scheme vs product design per t (K=4, B=2, N=4)
table2  low-subpacketization PDA rows and the product design at (q=3, m=3, B=10, N=18)

Floats are written with 12 significant digits, rationals as p/q (integers bare).
"""

from __future__ import annotations

import csv
import io
import math
from fractions import Fraction
from math import comb
from typing import Callable

from .analysis import (SchemeMetrics, log2_factorial_ratio, man_metrics, product_design_metrics,
                       qyan_rates, ratio_asymptotics, regular_rate)

__all__ = ["FIGURES", "emit_figure_data", "to_csv", "fmt"]

Table = tuple[list[str], list[list]]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.12g}"
    return str(x)


def _f(x) -> float:
    return float(x)


def fig2(B: int = 2, N: int = 4, K: int = 4) -> Table:
    head = ["mn", "t", "rate_pda", "rate_pd", "scheme_rate_pda", "scheme_rate_pd",
            "fallback_rate", "rate_pda_exact", "rate_pd_exact"]
    rows = []
    for t in range(K + 1):
        a, p = man_metrics(K, t, B, N), product_design_metrics(K, t, B, N)
        rows.append([Fraction(t, K), t, _f(a.rate), _f(p.rate), _f(a.scheme_rate), _f(p.scheme_rate),
                     _f(a.fallback_rate), a.rate, p.rate])
    return head, rows


def fig3(B: int = 2, N: int = 4, K: int = 4) -> Table:
    head = ["mn", "t", "upload_pda", "upload_pd", "ratio_pd_over_pda"]
    rows = []
    for t in range(K + 1):
        if t == K:
            # full cache: no delivery, so no queries are sent by either scheme
            rows.append([Fraction(t, K), t, 0.0, 0.0, None])
            continue
        a, p = man_metrics(K, t, B, N), product_design_metrics(K, t, B, N)
        rows.append([Fraction(t, K), t, a.upload_bits, p.upload_bits, p.upload_bits / a.upload_bits])
    return head, rows


def _qyan_point(q: int, m: int, B: int, N: int, mn: Fraction) -> tuple[str, SchemeMetrics]:
    K = q * (m + 1)
    if mn == 0:
        # trivial PDA: one row, K distinct labels
        R = regular_rate(1, K, 1, B, N)
        return f"({K},1,0,{K})", SchemeMetrics("pda", min(Fraction(N), R), R, Fraction(N), B - 1,
                                                B * K * (N - 1) * math.log2(B), B * K * (N - 1), B)
    if mn == 1:
        return f"({K},1,1,0)", SchemeMetrics("pda", Fraction(0), Fraction(0), Fraction(0), B - 1, 0.0)
    met = qyan_rates(q, m, B, N)
    if mn == Fraction(1, q):
        return f"({K},{q ** m},{q ** (m - 1)},{q ** (m + 1) - q ** m})", met["low"]
    if mn == 1 - Fraction(1, q):
        return f"({K},{(q - 1) * q ** m},{(q - 1) ** 2 * q ** (m - 1)},{q ** m})", met["high"]
    raise ValueError(f"no PDA family at M/N = {mn}")


def fig4(q: int = 3, m: int = 3, B: int = 10, N: int = 18) -> Table:
    K = q * (m + 1)
    head = ["mn", "t", "pda_params", "rate_pda", "rate_pd", "subpacketization_pda", "subpacketization_pd"]
    rows = []
    for mn in (Fraction(0), Fraction(1, q), 1 - Fraction(1, q), Fraction(1)):
        t = int(mn * K)
        params, a = _qyan_point(q, m, B, N, mn)
        p = product_design_metrics(K, t, B, N)
        rows.append([mn, t, params, _f(a.rate), _f(p.rate), a.subpacketization, p.subpacketization])
    return head, rows


def fig5(q: int = 3, B: int = 10, N: int = 300, m_max: int = 10) -> Table:
    head = ["m", "K", "t", "rate_new", "rate_pd", "rate_ratio", "limit"]
    limit = 1 / (1 - Fraction(1, B ** N))
    rows = []
    for m in range(1, m_max + 1):
        K, t = q * (m + 1), m + 1
        a = qyan_rates(q, m, B, N)["low"]
        p = product_design_metrics(K, t, B, N)
        ratio, _, _ = ratio_asymptotics(q, m, B, N)
        rows.append([m, K, t, _f(a.rate), _f(p.rate), _f(ratio), _f(limit)])
    return head, rows


def fig6(q: int = 3, B: int = 10, m_max: int = 8) -> Table:
    head = ["m", "K", "N", "F_new", "F_pd", "F_pd_over_F_new"]
    rows = []
    for m in range(1, m_max + 1):
        K = N = q * (m + 1)
        f_new, f_pd = (B - 1) * q ** m, B ** N * comb(K, m + 1)
        rows.append([m, K, N, f_new, f_pd, _f(Fraction(f_pd, f_new))])
    return head, rows


def fig7(q: int = 3, B: int = 10, m_max: int = 8) -> Table:
    head = ["m", "K", "N", "U_new", "U_pd", "U_pd_over_U_new"]
    rows = []
    for m in range(1, m_max + 1):
        K = N = q * (m + 1)
        t = m + 1
        u_new = B * K * (N - 1) * math.log2(B)
        u_pd = (t + 1) * comb(K, t + 1) * B * N * log2_factorial_ratio(B, N)
        rows.append([m, K, N, u_new, u_pd, u_pd / u_new])
    return head, rows


def table1(K: int = 4, B: int = 2, N: int = 4) -> Table:
    head = ["t", "mn", "rate_pda", "rate_pd", "subpacketization_pda", "subpacketization_pd",
            "upload_pda", "upload_pd"]
    rows = []
    for t in range(K + 1):
        a, p = man_metrics(K, t, B, N), product_design_metrics(K, t, B, N)
        rows.append([t, Fraction(t, K), a.rate, p.rate, a.subpacketization, p.subpacketization,
                     a.upload_bits, p.upload_bits])
    return head, rows


def table2(q: int = 3, m: int = 3, B: int = 10, N: int = 18) -> Table:
    head = ["scheme", "mn", "rate", "subpacketization", "upload_bits"]
    K = q * (m + 1)
    met = qyan_rates(q, m, B, N)
    pd = product_design_metrics(K, m + 1, B, N)
    rows = [
        ["pda_low", Fraction(1, q), _f(met["low"].rate), met["low"].subpacketization, met["low"].upload_bits],
        ["pda_high", 1 - Fraction(1, q), _f(met["high"].rate), met["high"].subpacketization,
         met["high"].upload_bits],
        ["product_design", Fraction(1, q), _f(pd.rate), pd.subpacketization, pd.upload_bits],
    ]
    return head, rows


FIGURES: dict[str, Callable[..., Table]] = {
    "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7,
    "table1": table1, "table2": table2,
}


def emit_figure_data(fig_id: str, **params) -> Table:
    """Header and rows for a figure or table id; keyword arguments override its defaults."""
    try:
        builder = FIGURES[fig_id]
    except KeyError:
        raise ValueError(f"unknown figure id {fig_id!r}; choose from {sorted(FIGURES)}") from None
    return builder(**params)


def to_csv(table: Table) -> str:
    head, rows = table
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()
