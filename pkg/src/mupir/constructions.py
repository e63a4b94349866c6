"""Constructors for the PDA families used in the analysis and examples."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

from .pda import Pda, loads

__all__ = ["ManParams", "man_pda", "single_user_pda", "trivial_pda", "example_pdas"]


@dataclass(frozen=True)
class ManParams:
    K: int
    t: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")
        if not 0 <= self.t <= self.K:
            raise ValueError(f"t must lie in [0:{self.K}], got {self.t}")


def _subset_rank(subset: tuple[int, ...], n: int) -> int:
    """0-based lexicographic rank of a sorted subset of range(n) among subsets of its size."""
    r = len(subset)
    rank = 0
    prev = -1
    for i, x in enumerate(subset):
        for y in range(prev + 1, x):
            rank += comb(n - 1 - y, r - 1 - i)
        prev = x
    return rank


def man_pda(params: ManParams) -> Pda:
    """The Maddah-Ali--Niesen PDA: a (t+1)-(K, C(K,t), C(K-1,t-1), C(K,t+1)) PDA.

    Rows are the t-subsets of users in lexicographic order. Cell (T, k) is a
    star when k is in T, otherwise the 1-based lexicographic rank of T + {k}
    among the (t+1)-subsets. For t = K the result is the single all-star row
    with S = 0 (``full_cache``).
    """
    K, t = params.K, params.t
    rows = []
    for T in combinations(range(K), t):
        members = set(T)
        row = []
        for k in range(K):
            if k in members:
                row.append(None)
            else:
                row.append(_subset_rank(tuple(sorted(members | {k})), K) + 1)
        rows.append(tuple(row))
    Z = comb(K - 1, t - 1) if t >= 1 else 0
    return Pda(K=K, F=comb(K, t), Z=Z, S=comb(K, t + 1), entries=tuple(rows))


def single_user_pda(F: int, Z: int) -> Pda:
    """One column: Z stars followed by the labels 1..F-Z."""
    if F < 1:
        raise ValueError(f"F must be positive, got {F}")
    if not 0 <= Z <= F:
        raise ValueError(f"Z must lie in [0:{F}], got {Z}")
    col = [None] * Z + list(range(1, F - Z + 1))
    return Pda(K=1, F=F, Z=Z, S=F - Z, entries=tuple((c,) for c in col))


def trivial_pda() -> Pda:
    return single_user_pda(1, 0)


_SEC3A = """\
8 6 3 11
* * * * * 1 2 4
* * * 1 2 * * 5
* * * 4 5 7 8 *
1 2 3 * * * * 10
4 5 6 * * 10 11 *
7 8 9 10 11 * * *
"""

_SEC4A = """\
6 4 2 4
* * 1 * 2 3
* 1 * 2 * 4
1 * * 3 4 *
2 3 4 * * *
"""


def example_pdas() -> dict[str, Pda]:
    """Built-in worked-example arrays: ``sec3a`` (irregular, 8 users), ``sec4a`` (3-regular, 6 users), ``trivial``."""
    return {
        "sec3a": loads(_SEC3A),
        "sec4a": loads(_SEC4A),
        "trivial": trivial_pda(),
    }
