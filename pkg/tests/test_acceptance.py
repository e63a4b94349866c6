"""Acceptance criteria 1-10, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line; the lines are
also collected and repeated in the pytest terminal summary (see conftest).
Run ``python3 tests/test_acceptance.py`` for the lines alone.
"""

import math
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from mupir.analysis import (man_metrics, order_optimality_check, regular_rate, theorem1_rate)
from mupir.constructions import ManParams, example_pdas, man_pda, single_user_pda, trivial_pda
from mupir.figures import emit_figure_data
from mupir.harness import (ExperimentPlan, estimate_rate, leaky_build_queries,
                           privacy_audit_empirical, privacy_audit_exact)
from mupir.pda import PdaValidityWarning, occupancy, regularity, validate
from mupir.protocol import FileSet, SystemConfig, gen_queries, run_round
from mupir.regress import SEC3A_OCCUPANCY, SEC4A_DEMANDS, SEC4A_V, EXAMPLE_QUERIES

LINES: list[str] = []
CATALOG = example_pdas()
GRID = [(K, t, B, N) for K in range(1, 9) for t in range(K + 1) for B in (2, 3) for N in (2, 4, 8)]


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_pda_validation():
    t0 = time.perf_counter()
    sec3a, sec4a = CATALOG["sec3a"], CATALOG["sec4a"]
    r3, r4 = validate(sec3a), validate(sec4a)
    occ = occupancy(sec3a, strict=False)
    occ_ok = {s: set(occ[s]) for s in range(1, sec3a.S + 1)} == SEC3A_OCCUPANCY
    ok3 = r3.valid and sec3a.params == (8, 6, 3, 11) and occ_ok
    ok4 = r4.valid and sec4a.params == (6, 4, 2, 4) and regularity(sec4a) == 3
    dt = time.perf_counter() - t0
    detail = (f"sec3a {sec3a.params} valid={r3.valid} occupancy_match={occ_ok}"
              + ("" if r3.valid else f" [{r3.violations[0]}]")
              + f"; sec4a {sec4a.params} valid={r4.valid} g={regularity(sec4a)}; {dt:.3f}s")
    verdict(1, ok3 and ok4 and dt < 1, detail)


def test_criterion_02_rate_formulas():
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        # sec3a breaks C3b; the formula is still evaluated on its K_s sets
        warnings.simplefilter("ignore", PdaValidityWarning)
        r3 = theorem1_rate(CATALOG["sec3a"], 2, 8).rate
    r4 = theorem1_rate(CATALOG["sec4a"], 3, 6).rate
    target = (3 - Fraction(1, 3 ** 15)) / 2
    dt = time.perf_counter() - t0
    ok = abs(float(r3) - 3.663) <= 1e-3 and r4 == target and dt < 1
    verdict(2, ok, f"sec3a R={float(r3):.6f} (|d|={abs(float(r3) - 3.663):.1e}); "
                   f"sec4a R={r4} == (3-3^-15)/2: {r4 == target}; {dt:.3f}s")


def test_criterion_03_example_queries_queries():
    t0 = time.perf_counter()
    c = SystemConfig(B=3, N=6, pda=CATALOG["sec4a"], file_bytes=64)
    _, Q = gen_queries(c, SEC4A_DEMANDS, V=np.array(SEC4A_V))
    matched = sum(tuple(int(x) for x in Q[b, k]) == EXAMPLE_QUERIES[k][b] for k in range(6) for b in range(3))
    dt = time.perf_counter() - t0
    verdict(3, matched == 18 and dt < 1, f"{matched}/18 queries match; {dt:.3f}s")


def _round_configs():
    pdas = [("trivial", trivial_pda())]
    pdas += [(f"single-user({F},{Z})", single_user_pda(F, Z)) for F in range(1, 5) for Z in range(F + 1)]
    pdas += [(f"man({K},{t})", man_pda(ManParams(K, t))) for K in range(1, 7) for t in range(K + 1)]
    pdas += [("sec3a", CATALOG["sec3a"]), ("sec4a", CATALOG["sec4a"])]
    return [(name, pda, B) for name, pda in pdas for B in (2, 3, 4)]


def test_criterion_04_end_to_end_round_trips():
    t0 = time.perf_counter()
    gen = np.random.default_rng(4)
    L = 4096
    configs = _round_configs()
    rounds_per = -(-1000 // len(configs))
    total, bad = 0, {}
    for name, pda, B in configs:
        for r in range(rounds_per):
            N = int(gen.integers(1, 5))
            c = SystemConfig(B=B, N=N, pda=pda, file_bytes=L, seed=int(gen.integers(2 ** 63)),
                             strict=False)
            raw = [gen.integers(0, 256, size=L, dtype=np.uint8).tobytes() for _ in range(N)]
            demands = [int(x) for x in gen.integers(0, N, size=pda.K)]
            tr = run_round(c, FileSet.from_bytes(raw, c), demands, round_index=r)
            total += 1
            if any(tr.decoded[k] != raw[demands[k]] for k in range(pda.K)):
                bad[name] = bad.get(name, 0) + 1
    dt = time.perf_counter() - t0
    failing = ", ".join(f"{n}: {m} rounds" for n, m in sorted(bad.items()))
    verdict(4, not bad and total >= 1000 and dt < 60,
            f"{total} rounds over {len(configs)} (PDA, B) pairs; "
            f"{'all users decoded' if not bad else 'decode failures in ' + failing}; {dt:.1f}s")


def test_criterion_05_download_accounting():
    c = SystemConfig(B=3, N=6, pda=CATALOG["sec4a"], file_bytes=4096)
    gen = np.random.default_rng(5)
    raw = [gen.integers(0, 256, size=4096, dtype=np.uint8).tobytes() for _ in range(6)]
    tr = run_round(c, FileSet.from_bytes(raw, c), SEC4A_DEMANDS, V=np.array(SEC4A_V))
    total = Fraction(tr.total_download_bits, c.L_bits)
    up_ok = math.isclose(tr.upload_bits, 90 * math.log2(3), rel_tol=1e-12)
    ok = total == Fraction(3, 2) and up_ok and tr.subpacketization == 8 and all(tr.success)
    verdict(5, ok, f"download {total} L, upload {tr.upload_bits:.9f} bits "
                   f"(90 log2 3 = {90 * math.log2(3):.9f}), subpacketization {tr.subpacketization}")


EXHAUSTIVE = [
    ("(2,2,1,1)", man_pda(ManParams(2, 1)), 2, 2, (0, 1)),
    ("man(3,1)", man_pda(ManParams(3, 1)), 2, 2, None),
    ("man(3,2)", man_pda(ManParams(3, 2)), 2, 3, (0, 1, 2)),
    ("man(2,1)", man_pda(ManParams(2, 1)), 3, 2, None),
    ("man(4,2)", man_pda(ManParams(4, 2)), 2, 3, (2, 0, 1, 1)),
    ("single-user(4,1)", single_user_pda(4, 1), 3, 3, None),
    ("sec4a", CATALOG["sec4a"], 2, 2, None),
    ("sec4a", CATALOG["sec4a"], 3, 2, (1, 0, 1, 0, 0, 1)),
    ("sec4a", CATALOG["sec4a"], 2, 4, (3, 1, 0, 2, 2, 1)),
]


def test_criterion_06_exhaustive_rate_oracle():
    t0 = time.perf_counter()
    tiny = estimate_rate(ExperimentPlan(SystemConfig(B=2, N=2, pda=EXHAUSTIVE[0][1], file_bytes=8),
                                        mode="exhaustive", demands=(0, 1)))
    ok = (tiny.samples == 4 and tiny.mean == Fraction(7, 8) and tiny.per_server[0] == Fraction(3, 8)
          and tiny.mean == theorem1_rate(EXHAUSTIVE[0][1], 2, 2).scheme_rate)
    matched = 0
    for _, pda, B, N, d in EXHAUSTIVE[1:]:
        plan = ExperimentPlan(SystemConfig(B=B, N=N, pda=pda, file_bytes=8), mode="exhaustive", demands=d)
        assert plan.realizations <= 2 ** 20
        est = estimate_rate(plan)
        matched += est.mean == theorem1_rate(pda, B, N).scheme_rate
    dt = time.perf_counter() - t0
    ok = ok and matched == len(EXHAUSTIVE) - 1 and dt < 30
    verdict(6, ok, f"(2,2,1,1): mean {tiny.mean}, server 0 {tiny.per_server[0]} over {tiny.samples} "
                   f"realizations; {matched}/{len(EXHAUSTIVE) - 1} further instances exact; {dt:.1f}s")


AUDITS = [
    (man_pda(ManParams(2, 1)), 2, 2, [(0, 0), (1, 1), (0, 1)]),
    (man_pda(ManParams(2, 1)), 3, 3, [(0, 0), (2, 1)]),
    (man_pda(ManParams(3, 1)), 2, 3, [(0, 0, 0), (2, 1, 0)]),
    (single_user_pda(3, 1), 4, 3, [(0,), (1,), (2,)]),
    (CATALOG["sec4a"], 2, 3, [(0,) * 6, (2, 1, 0, 2, 2, 1)]),
    (CATALOG["sec4a"], 3, 2, [(0,) * 6, (1, 0, 1, 1, 0, 1)]),
]


def test_criterion_07_privacy():
    t0 = time.perf_counter()
    tvs = []
    for pda, B, N, ds in AUDITS:
        rep = privacy_audit_exact(SystemConfig(B=B, N=N, pda=pda, file_bytes=8), ds)
        tvs.append((rep.max_tv, rep.private))
    exact_ok = all(tv == 0 and p for tv, p in tvs)
    c = SystemConfig(B=3, N=6, pda=CATALOG["sec4a"], file_bytes=8)
    ds = [(0,) * 6, SEC4A_DEMANDS]
    leak = privacy_audit_empirical(c, ds, 100_000, builder=leaky_build_queries)
    honest = privacy_audit_empirical(c, ds, 100_000)
    dt = time.perf_counter() - t0
    ok = exact_ok and not leak.private and honest.private and dt < 60
    verdict(7, ok, f"exact TV on {len(AUDITS)} instances: {sorted({str(tv) for tv, _ in tvs})}; "
                   f"mutant flagged={not leak.private}, honest builder flagged={not honest.private} "
                   f"at 10^5 samples; {dt:.1f}s")


def test_criterion_08_code_path_consistency():
    mismatches = [(K, t, B, N) for K, t, B, N in GRID
                  if man_metrics(K, t, B, N).scheme_rate != theorem1_rate(man_pda(ManParams(K, t)), B, N).scheme_rate
                  or man_metrics(K, t, B, N).rate != theorem1_rate(man_pda(ManParams(K, t)), B, N).rate]
    regular = {n: p for n, p in CATALOG.items() if validate(p).valid and regularity(p)}
    reg_bad = [(n, B, N) for n, p in regular.items() for B in (2, 3) for N in (2, 4, 8)
               if regular_rate(regularity(p), p.S, p.F, B, N) != theorem1_rate(p, B, N).scheme_rate]
    verdict(8, not mismatches and not reg_bad,
            f"{len(GRID)} MAN grid points, {len(mismatches)} mismatches; "
            f"regular catalog {sorted(regular)}: {len(reg_bad)} mismatches")


def test_criterion_09_order_optimality():
    reps = [order_optimality_check(K, N, B, t) for K, t, B, N in GRID]
    worst = max((r.ratio / r.bound for r in reps if r.ratio is not None), default=Fraction(0))
    ok = all(r.holds for r in reps)
    verdict(9, ok, f"{len(reps)} grid points; max (R/R_cc)/(B/(B-1)) = {float(worst):.6f}; "
                   f"factor-2 and factor-8 chains hold: {ok}")


def test_criterion_10_figure_orderings():
    head, rows = emit_figure_data("fig2", B=2, N=4, K=4)
    i, j = head.index("rate_pda_exact"), head.index("rate_pd_exact")
    fig2_ok = all(r[i] >= r[j] for r in rows)

    def increasing(fig, col):
        h, rs = emit_figure_data(fig)
        vals = [r[h.index(col)] for r in rs]
        return all(a < b for a, b in zip(vals, vals[1:])), len(vals)

    f6, n6 = increasing("fig6", "F_pd_over_F_new")
    f7, n7 = increasing("fig7", "U_pd_over_U_new")
    verdict(10, fig2_ok and f6 and f7,
            f"fig2 PDA >= PD at {len(rows)} points: {fig2_ok}; fig6 increasing over {n6} K: {f6}; "
            f"fig7 increasing over {n7} K: {f7}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
