"""Placement delivery arrays: representation, text format, validation, analysis.

A PDA is an F x K grid whose cells hold either a star (the subfile is cached
by that user) or an integer label in ``[1:S]`` (the subfile is delivered in
coded transmission ``s``). Rows, columns and labels are reported 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

STAR = None  # a cell holding the star symbol

Cell = Optional[int]


class PdaFormatError(ValueError):
    """Structural problem with a PDA grid or file (distinct from C1-C3 violations)."""


class PdaValidityWarning(UserWarning):
    """An analysis ran on an array that violates C1-C3; its guarantees do not apply."""


class InvalidPdaError(ValueError):
    """Raised when an operation requires a valid PDA and got one that is not."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(report.summary())


@dataclass(frozen=True)
class Violation:
    condition: str  # one of C1, C2, C3a, C3b, HEADER, RANGE
    cells: tuple[tuple[int, int], ...]  # 1-based (row, column) witnesses
    message: str

    def __str__(self) -> str:
        where = ", ".join(f"({f},{k})" for f, k in self.cells)
        return f"{self.condition}: {self.message}" + (f" at {where}" if where else "")


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def conditions(self) -> set[str]:
        return {v.condition for v in self.violations}

    def summary(self) -> str:
        if self.valid:
            return "valid"
        return "invalid: " + "; ".join(str(v) for v in self.violations)


@dataclass(frozen=True)
class Pda:
    """An F x K placement delivery array.

    ``entries[f][k]`` is ``None`` for a star or the integer label. ``Z`` and ``S``
    are the declared parameters; :func:`validate` cross-checks them against
    the grid.
    """

    K: int
    F: int
    Z: int
    S: int
    entries: tuple[tuple[Cell, ...], ...]

    def __post_init__(self):
        if len(self.entries) != self.F:
            raise PdaFormatError(f"expected {self.F} rows, got {len(self.entries)}")
        for f, row in enumerate(self.entries, start=1):
            if len(row) != self.K:
                raise PdaFormatError(f"row {f} has {len(row)} cells, expected {self.K}")
            for cell in row:
                if cell is not None and (not isinstance(cell, int) or isinstance(cell, bool)):
                    raise PdaFormatError(f"row {f} holds a non-integer cell {cell!r}")

    @classmethod
    def from_grid(cls, grid: Sequence[Sequence[Union[int, str, None]]],
                  Z: Optional[int] = None, S: Optional[int] = None) -> "Pda":
        """Build a PDA from rows of ``'*'``/``None``/int, inferring Z and S when omitted."""
        if not grid:
            raise PdaFormatError("empty grid")
        widths = {len(row) for row in grid}
        if len(widths) != 1:
            raise PdaFormatError(f"ragged rows: widths {sorted(widths)}")
        rows = tuple(tuple(None if c in ("*", None) else int(c) for c in row) for row in grid)
        K = len(rows[0])
        if Z is None:
            Z = sum(1 for row in rows if row[0] is None)
        if S is None:
            S = max((c for row in rows for c in row if c is not None), default=0)
        return cls(K=K, F=len(rows), Z=Z, S=S, entries=rows)

    @property
    def params(self) -> tuple[int, int, int, int]:
        return (self.K, self.F, self.Z, self.S)

    @property
    def full_cache(self) -> bool:
        """True for the degenerate all-star array (no coded transmissions)."""
        return self.S == 0

    def cell(self, f: int, k: int) -> Cell:
        """Cell at 0-based (f, k)."""
        return self.entries[f][k]

    def label_cells(self) -> dict[int, list[tuple[int, int]]]:
        """Map each label s to its 0-based (f, k) cells, in row-major order."""
        cells: dict[int, list[tuple[int, int]]] = {s: [] for s in range(1, self.S + 1)}
        for f, row in enumerate(self.entries):
            for k, c in enumerate(row):
                if c is not None:
                    cells.setdefault(c, []).append((f, k))
        return cells

    def star_rows(self, k: int) -> list[int]:
        """0-based rows cached by 0-based user k."""
        return [f for f in range(self.F) if self.entries[f][k] is None]

    def __str__(self) -> str:
        return dumps(self)


def _parse_token(tok: str, line_no: int) -> Cell:
    if tok == "*":
        return None
    try:
        return int(tok)
    except ValueError:
        raise PdaFormatError(f"line {line_no}: bad token {tok!r}") from None


def loads(text: str) -> Pda:
    """Parse the ``.pda`` text format."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise PdaFormatError("empty PDA file")
    header = lines[0].split()
    if len(header) != 4:
        raise PdaFormatError("header must be 'K F Z S'")
    try:
        K, F, Z, S = (int(x) for x in header)
    except ValueError:
        raise PdaFormatError("header fields must be integers") from None
    if K < 1 or F < 1 or Z < 0 or S < 0:
        raise PdaFormatError(f"header out of range: {K} {F} {Z} {S}")
    body = lines[1:]
    if len(body) != F:
        raise PdaFormatError(f"header declares F={F} rows, file has {len(body)}")
    rows = []
    for i, ln in enumerate(body, start=2):
        toks = ln.split()
        if len(toks) != K:
            raise PdaFormatError(f"line {i}: {len(toks)} tokens, expected K={K}")
        rows.append(tuple(_parse_token(t, i) for t in toks))
    return Pda(K=K, F=F, Z=Z, S=S, entries=tuple(rows))


def dumps(pda: Pda) -> str:
    out = [f"{pda.K} {pda.F} {pda.Z} {pda.S}"]
    for row in pda.entries:
        out.append(" ".join("*" if c is None else str(c) for c in row))
    return "\n".join(out) + "\n"


def load(path: Union[str, Path]) -> Pda:
    return loads(Path(path).read_text())


def dump(pda: Pda, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(pda))


def validate(pda: Pda) -> ValidationReport:
    """Check conditions C1-C3 and the declared parameters, collecting every violation."""
    out: list[Violation] = []
    F, K = pda.F, pda.K

    # C1: exactly Z stars per column
    for k in range(K):
        stars = [f for f in range(F) if pda.entries[f][k] is None]
        if len(stars) != pda.Z:
            out.append(Violation("C1", ((1, k + 1),),
                                 f"column {k + 1} has {len(stars)} stars, declared Z={pda.Z}"))

    cells: dict[int, list[tuple[int, int]]] = {}
    for f in range(F):
        for k in range(K):
            c = pda.entries[f][k]
            if c is None:
                continue
            if not 1 <= c <= pda.S:
                out.append(Violation("RANGE", ((f + 1, k + 1),),
                                     f"label {c} outside [1:{pda.S}]"))
                continue
            cells.setdefault(c, []).append((f, k))

    # C2: every label present
    missing = [s for s in range(1, pda.S + 1) if s not in cells]
    for s in missing:
        out.append(Violation("C2", (), f"label {s} never occurs"))

    # C3: equal labels in distinct rows/columns with stars at the crossing cells
    for s in sorted(cells):
        pos = cells[s]
        for i in range(len(pos)):
            f1, k1 = pos[i]
            for j in range(i + 1, len(pos)):
                f2, k2 = pos[j]
                wit = ((f1 + 1, k1 + 1), (f2 + 1, k2 + 1))
                if f1 == f2:
                    out.append(Violation("C3a", wit, f"label {s} repeated in row {f1 + 1}"))
                    continue
                if k1 == k2:
                    out.append(Violation("C3a", wit, f"label {s} repeated in column {k1 + 1}"))
                    continue
                if pda.entries[f1][k2] is not None or pda.entries[f2][k1] is not None:
                    out.append(Violation(
                        "C3b", wit + ((f1 + 1, k2 + 1), (f2 + 1, k1 + 1)),
                        f"label {s}: crossing cells are not both stars"))
    return ValidationReport(tuple(out))


def require_valid(pda: Pda) -> None:
    report = validate(pda)
    if not report.valid:
        raise InvalidPdaError(report)


@dataclass(frozen=True)
class OccupancyMap:
    """Column sets K_s (1-based user indices) for each label s."""

    columns: dict[int, frozenset[int]] = field(default_factory=dict)

    def sizes(self) -> dict[int, int]:
        return {s: len(ks) for s, ks in self.columns.items()}

    def __getitem__(self, s: int) -> frozenset[int]:
        return self.columns[s]


def occupancy(pda: Pda, strict: bool = True) -> OccupancyMap:
    """Column sets K_s. With ``strict=False`` C1-C3 are not enforced, only label range."""
    if strict:
        require_valid(pda)
    cols: dict[int, set[int]] = {s: set() for s in range(1, pda.S + 1)}
    for f, row in enumerate(pda.entries):
        for k, c in enumerate(row):
            if c is None:
                continue
            if c not in cols:
                raise PdaFormatError(f"label {c} at ({f + 1},{k + 1}) outside [1:{pda.S}]")
            cols[c].add(k + 1)
    return OccupancyMap({s: frozenset(v) for s, v in cols.items()})


def regularity(pda: Pda) -> Optional[int]:
    """Return g when every label occupies exactly g columns, else None."""
    sizes = set(occupancy(pda).sizes().values())
    if len(sizes) == 1:
        return sizes.pop()
    return None


def caching_ratio(pda: Pda) -> Fraction:
    """M/N = Z/F."""
    return Fraction(pda.Z, pda.F)


def coding_rate(pda: Pda) -> Fraction:
    """Coded caching rate S/F of the underlying (non-private) scheme."""
    return Fraction(pda.S, pda.F)


def iter_label_members(pda: Pda) -> Iterable[tuple[int, list[int]]]:
    """Yield (s, sorted 0-based users in K_s)."""
    occ = occupancy(pda)
    for s in range(1, pda.S + 1):
        yield s, sorted(k - 1 for k in occ[s])
