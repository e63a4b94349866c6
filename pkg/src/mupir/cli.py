"""Command-line front end: ``mupir {validate,construct,simulate,analyze,audit,regress}``.

Exit codes: 0 success, 1 domain failure (invalid PDA, failed decode, failed
audit or regression), 2 usage or I/O error. Machine-readable output goes to
files, summaries to stdout (suppressed by ``--quiet``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import rng
from .analysis import theorem1_rate
from .constructions import ManParams, example_pdas, man_pda, single_user_pda, trivial_pda
from .figures import emit_figure_data, fmt, to_csv
from .harness import (CapExceeded, ExperimentPlan, estimate_rate, leaky_build_queries,
                      privacy_audit_empirical, privacy_audit_exact)
from .pda import Pda, PdaFormatError, PdaValidityWarning, load, dumps, regularity, validate
from .protocol import FileSet, SystemConfig, build_queries, run_round
from .regress import regression_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input file or arguments; maps to exit code 2."""


def _say(args, *msg) -> None:
    if not args.quiet:
        print(*msg)


def resolve_pda(spec: str, base: Optional[Path] = None) -> Pda:
    """``catalog:<name>``, ``man:<K>,<t>``, ``single-user:<F>,<Z>``, ``trivial`` or a file path."""
    try:
        if spec.startswith("catalog:"):
            return example_pdas()[spec.split(":", 1)[1]]
        if spec.startswith("man:"):
            K, t = (int(x) for x in spec[4:].split(","))
            return man_pda(ManParams(K, t))
        if spec.startswith("single-user:"):
            F, Z = (int(x) for x in spec[12:].split(","))
            return single_user_pda(F, Z)
        if spec == "trivial":
            return trivial_pda()
    except (KeyError, ValueError) as e:
        raise UsageError(f"bad PDA spec {spec!r}: {e}") from None
    path = Path(spec)
    if base is not None and not path.is_absolute():
        path = base / path
    try:
        return load(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    except PdaFormatError as e:
        raise UsageError(f"{path}: {e}") from None


@dataclass
class Plan:
    """A parsed round/experiment plan file."""

    config: SystemConfig
    mode: str = "pda"
    demands: Optional[tuple[int, ...]] = None
    V: Optional[np.ndarray] = None
    rounds: int = 1
    files_dir: Optional[Path] = None
    keep_broadcasts: bool = False
    estimate: dict = field(default_factory=dict)


_PLAN_KEYS = {"B", "N", "L_bytes", "pda_path", "pda", "seed", "demands", "mode", "V", "rounds",
              "files_dir", "keep_broadcasts", "estimate", "strict"}


def load_plan(path: Path, seed: Optional[int] = None) -> Plan:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: plan must be a JSON object")
    unknown = set(raw) - _PLAN_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
    base = Path(path).parent
    spec = raw.get("pda_path") or raw.get("pda")
    if not spec:
        raise UsageError(f"{path}: need 'pda_path'")
    pda = resolve_pda(str(spec), base)
    files_dir = None
    if raw.get("files_dir"):
        files_dir = base / raw["files_dir"]
    try:
        file_bytes = int(raw["L_bytes"]) if "L_bytes" in raw else None
        if files_dir is not None:
            sizes = {p.stat().st_size for p in sorted(files_dir.iterdir()) if p.is_file()}
            if file_bytes is None and len(sizes) == 1:
                file_bytes = sizes.pop()
        if file_bytes is None:
            raise UsageError(f"{path}: need 'L_bytes'")
        cfg = SystemConfig(B=int(raw["B"]), N=int(raw["N"]), pda=pda, file_bytes=file_bytes,
                           seed=int(seed if seed is not None else raw.get("seed", rng.default_seed())),
                           strict=bool(raw.get("strict", True)))
    except KeyError as e:
        raise UsageError(f"{path}: missing key {e}") from None
    except OSError as e:
        raise UsageError(f"cannot read files_dir: {e.strerror}") from None
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None
    mode = raw.get("mode", "pda")
    if mode not in ("pda", "uncoded"):
        raise UsageError(f"{path}: mode must be 'pda' or 'uncoded'")
    demands = tuple(int(x) for x in raw["demands"]) if raw.get("demands") is not None else None
    V = np.asarray(raw["V"], dtype=np.int64) if raw.get("V") is not None else None
    est = raw.get("estimate") or {}
    if not isinstance(est, dict):
        raise UsageError(f"{path}: 'estimate' must be an object")
    return Plan(cfg, mode, demands, V, int(raw.get("rounds", 1)), files_dir,
                bool(raw.get("keep_broadcasts", False)), est)


def _load_files(plan: Plan, round_index: int) -> FileSet:
    cfg = plan.config
    if plan.files_dir is None:
        return FileSet.random(cfg, round_index)
    paths = sorted(p for p in plan.files_dir.iterdir() if p.is_file())
    if len(paths) != cfg.N:
        raise UsageError(f"{plan.files_dir}: expected {cfg.N} files, found {len(paths)}")
    try:
        return FileSet.from_bytes([p.read_bytes() for p in paths], cfg)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _demands_for(plan: Plan, round_index: int) -> tuple[int, ...]:
    if plan.demands is not None:
        return plan.demands
    gen = rng.stream(plan.config.seed, rng.DEMANDS, round_index)
    return tuple(int(x) for x in gen.integers(0, plan.config.N, size=plan.config.K))


def _analytic(cfg: SystemConfig):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PdaValidityWarning)
        return theorem1_rate(cfg.pda, cfg.B, cfg.N)


# subcommands

def cmd_validate(args) -> int:
    pda = resolve_pda(args.path)
    report = validate(pda)
    _say(args, f"K={pda.K} F={pda.F} Z={pda.Z} S={pda.S}")
    if report.valid:
        g = regularity(pda)
        _say(args, "valid" + (f" ({g}-regular)" if g else " (not regular)"))
        return EXIT_OK
    for v in report.violations:
        _say(args, str(v))
    return EXIT_FAIL


def cmd_construct(args) -> int:
    fam = args.family
    try:
        if fam == "man":
            if args.k is None or args.t is None:
                raise UsageError("man needs --k and --t")
            pda = man_pda(ManParams(args.k, args.t))
        elif fam == "single-user":
            if args.f is None or args.z is None:
                raise UsageError("single-user needs --f and --z")
            pda = single_user_pda(args.f, args.z)
        elif fam == "trivial":
            pda = trivial_pda()
        elif fam.startswith("catalog:"):
            name = fam.split(":", 1)[1]
            cat = example_pdas()
            if name not in cat:
                raise UsageError(f"unknown catalog entry {name!r}; choose from {sorted(cat)}")
            pda = cat[name]
        else:
            raise UsageError(f"unknown family {fam!r}")
    except ValueError as e:
        raise UsageError(str(e)) from None
    text = dumps(pda)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as e:
            raise UsageError(f"cannot write {args.out}: {e.strerror}") from None
    else:
        sys.stdout.write(text)
    g = regularity(pda) if validate(pda).valid else None
    msg = f"K={pda.K} F={pda.F} Z={pda.Z} S={pda.S}" + (f" g={g}" if g else "")
    if not args.quiet:
        # keep stdout clean for the PDA text when no output path is given
        print(msg, file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    plan = load_plan(Path(args.plan), args.seed)
    cfg = plan.config
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create {out}: {e.strerror}") from None
    if plan.V is not None and plan.rounds != 1:
        raise UsageError("an explicit V only makes sense for a single round")
    analytic = _analytic(cfg)
    rows = []
    failures = 0
    for r in range(plan.rounds):
        files = _load_files(plan, r)
        try:
            tr = run_round(cfg, files, _demands_for(plan, r), round_index=r, V=plan.V,
                           mode=plan.mode, keep_broadcasts=plan.keep_broadcasts)
        except ValueError as e:
            raise UsageError(str(e)) from None
        (out / f"transcript_{r:04d}.json").write_text(tr.to_json() + "\n")
        failures += not all(tr.success)
        rows.append([r, tr.rate, float(tr.rate), *tr.download_bits, tr.upload_bits,
                     tr.upload_wire_bits, all(tr.success)])
    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "rate", "rate_float", *[f"bits_server{b}" for b in range(cfg.B)],
                    "upload_bits", "upload_wire_bits", "success"])
        w.writerows([[fmt(x) for x in row] for row in rows])

    _say(args, f"B={cfg.B} N={cfg.N} K={cfg.K} L={cfg.L_bits} bits mode={plan.mode} seed={cfg.seed}")
    _say(args, f"{'round':>5}  {'rate (x L)':>14}  {'float':>14}  success")
    for row in rows:
        _say(args, f"{row[0]:>5}  {fmt(row[1]):>14}  {fmt(row[2]):>14}  {fmt(row[-1])}")
    expected = analytic.fallback_rate if plan.mode == "uncoded" else analytic.scheme_rate
    _say(args, f"expected rate ({'N-M' if plan.mode == 'uncoded' else 'closed form'}): "
               f"{fmt(expected)} = {fmt(float(expected))}")
    _say(args, f"upload: {fmt(rows[0][-3])} bits analytic, {rows[0][-2]} bits on the wire")
    _say(args, f"subpacketization: {cfg.subpacketization}")

    if plan.estimate:
        est_mode = plan.estimate.get("mode", "monte_carlo")
        try:
            ep = ExperimentPlan(cfg, trials=int(plan.estimate.get("trials", 1000)), mode=est_mode,
                                demands=plan.demands, delivery=plan.mode,
                                cap=int(plan.estimate.get("cap", 2 ** 20)))
            est = estimate_rate(ep)
        except (CapExceeded, ValueError) as e:
            raise UsageError(str(e)) from None
        with open(out / "estimate.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mode", "mean", "mean_float", "half_width", "samples", "analytic",
                        *[f"rate_server{b}" for b in range(cfg.B)], "matches_analytic"])
            w.writerow([fmt(x) for x in (est.mode, est.mean, float(est.mean), est.half_width,
                                         est.samples, est.analytic, *est.per_server,
                                         est.matches_analytic)])
        _say(args, f"{est.mode} mean rate over {est.samples} realizations: {fmt(est.mean)}"
                   + (f" +/- {fmt(est.half_width)}" if est.mode == "monte_carlo" else "")
                   + f" (analytic {fmt(est.analytic)}, match={fmt(est.matches_analytic)})")
        if not est.matches_analytic:
            failures += 1
    _say(args, f"wrote {out}")
    return EXIT_FAIL if failures else EXIT_OK


def cmd_analyze(args) -> int:
    try:
        table = emit_figure_data(args.id)
    except ValueError as e:
        raise UsageError(str(e)) from None
    text = to_csv(table)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as e:
            raise UsageError(f"cannot write {args.out}: {e.strerror}") from None
        _say(args, f"wrote {len(table[1])} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_demands(items: list[str], K: int, N: int) -> list[tuple[int, ...]]:
    out = []
    for item in items:
        try:
            d = tuple(int(x) for x in item.split(","))
        except ValueError:
            raise UsageError(f"bad demand vector {item!r}") from None
        if len(d) != K or any(not 0 <= x < N for x in d):
            raise UsageError(f"demand vector {item!r} must have {K} entries in [0:{N - 1}]")
        out.append(d)
    return out


def cmd_audit(args) -> int:
    plan = load_plan(Path(args.config), args.seed)
    cfg = plan.config
    demands = _parse_demands(args.demands, cfg.K, cfg.N)
    builder = leaky_build_queries if args.mutant else build_queries
    try:
        if args.mode == "exact":
            rep = privacy_audit_exact(cfg, demands, builder=builder, cap=args.cap)
        else:
            rep = privacy_audit_empirical(cfg, demands, args.samples, builder=builder, alpha=args.alpha)
    except CapExceeded as e:
        raise UsageError(f"{e}") from None
    except ValueError as e:
        raise UsageError(str(e)) from None
    _say(args, f"{rep.method} audit ({rep.scope}), {rep.samples} samples per demand vector, "
               f"domain {rep.domain}" + (" [leaky mutant builder]" if args.mutant else ""))
    for s in rep.servers:
        extra = f" uniform={fmt(s.uniform)}" if s.uniform is not None else f" min_p={s.min_p_value:.3e}"
        _say(args, f"server {s.server}: TV={fmt(s.tv)}{extra} flagged={fmt(s.flagged)}")
    _say(args, "private" if rep.private else "LEAK DETECTED")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["server", "tv", "uniform", "min_p_value", "sum_violations", "flagged"])
            for s in rep.servers:
                w.writerow([fmt(x) for x in (s.server, s.tv, s.uniform, s.min_p_value,
                                             s.sum_violations, s.flagged)])
    return EXIT_OK if rep.private else EXIT_FAIL


def cmd_regress(args) -> int:
    results = regression_suite()
    for r in results:
        _say(args, f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    _say(args, f"{len(results) - len(failed)}/{len(results)} passed")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "passed", "detail"])
            for r in results:
                w.writerow([r.name, fmt(r.passed), r.detail])
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="suppress human-readable summaries")
    p = argparse.ArgumentParser(prog="mupir", description="Cache-aided multi-user PIR from placement delivery arrays.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="check a .pda file against C1-C3")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("construct", parents=[common], help="write a PDA in .pda format")
    c.add_argument("family", help="man, single-user, trivial or catalog:<name>")
    c.add_argument("--k", type=int)
    c.add_argument("--t", type=int)
    c.add_argument("--f", type=int)
    c.add_argument("--z", type=int)
    c.add_argument("-o", "--out", help="output path (default: stdout)")
    c.set_defaults(func=cmd_construct)

    s = sub.add_parser("simulate", parents=[common], help="run protocol rounds from a JSON plan")
    s.add_argument("plan")
    s.add_argument("-o", "--out", default="mupir-out", help="output directory")
    s.add_argument("--seed", type=int, help=f"override the plan seed (env {rng.SEED_ENV} sets the default)")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", parents=[common], help="emit the dataset behind a figure or table")
    a.add_argument("id", help="fig2..fig7, table1 or table2")
    a.add_argument("-o", "--out")
    a.set_defaults(func=cmd_analyze)

    u = sub.add_parser("audit", parents=[common], help="privacy audit of the query distribution")
    u.add_argument("config", help="JSON plan giving B, N, L_bytes and pda_path")
    u.add_argument("--mode", choices=["exact", "empirical"], default="exact")
    u.add_argument("--demands", nargs="+", required=True, metavar="D",
                   help="comma-separated demand vectors, e.g. 0,0 1,1")
    u.add_argument("--samples", type=int, default=100_000)
    u.add_argument("--alpha", type=float, default=1e-6)
    u.add_argument("--cap", type=int, default=2 ** 20)
    u.add_argument("--mutant", action="store_true", help="use the shipped demand-leaking query builder")
    u.add_argument("--seed", type=int)
    u.add_argument("-o", "--out")
    u.set_defaults(func=cmd_audit)

    r = sub.add_parser("regress", parents=[common], help="run the worked-example regressions")
    r.add_argument("-o", "--out")
    r.set_defaults(func=cmd_regress)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"mupir {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
