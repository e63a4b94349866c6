"""Time the compiled kernels against the numpy fallback on protocol-shaped inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--trials 20000]

Each kernel is checked for identical output before it is timed.
"""

import argparse
import sys
import timeit

import numpy as np

from mupir import _fallback
from mupir.constructions import ManParams, example_pdas, man_pda
from mupir.protocol import build_queries, label_structure

try:
    from mupir import _kernels
except ImportError:
    _kernels = None


def cases(trials: int, packet_bytes: int, seed: int):
    gen = np.random.default_rng(seed)
    out = []
    for name, pda, B, N in [("sec4a", example_pdas()["sec4a"], 3, 6),
                            ("man(6,3)", man_pda(ManParams(6, 3)), 4, 8)]:
        K = pda.K
        V = gen.integers(0, B, size=(trials, K, N - 1))
        d = gen.integers(0, N, size=K)
        Q = build_queries(V, d, B)  # (T, B, K, N)
        _, indptr, indices = label_structure(pda)
        cells = pda.label_cells()
        rows = np.array([f for s in sorted(cells) for f, _ in cells[s]], dtype=np.int64)
        users = np.array([k for s in sorted(cells) for _, k in cells[s]], dtype=np.int64)
        packets = gen.integers(0, 256, size=(N, pda.F, B - 1, packet_bytes), dtype=np.uint8)
        out.append((f"{name} B={B} N={N}", {
            "xor_answer": (packets, rows, users, np.ascontiguousarray(Q[0, 1])),
            "presence": (np.ascontiguousarray(Q[:, 0]), indptr, indices),
            "encode_queries": (np.ascontiguousarray(Q[:, 1]), B),
        }))
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--trials", type=int, default=20000, help="query realizations per batch")
    p.add_argument("--packet-bytes", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .`", file=sys.stderr)
        return 1

    print(f"{'case':<22} {'kernel':<15} {'compiled ms':>12} {'fallback ms':>12} {'speedup':>8}")
    for label, kernels in cases(args.trials, args.packet_bytes, args.seed):
        for name, call_args in kernels.items():
            fast, slow = getattr(_kernels, name), getattr(_fallback, name)
            if not np.array_equal(fast(*call_args), slow(*call_args)):
                print(f"{label}: {name} outputs differ", file=sys.stderr)
                return 1
            t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
            t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
            print(f"{label:<22} {name:<15} {1e3 * t_fast:>12.3f} {1e3 * t_slow:>12.3f} "
                  f"{t_slow / t_fast:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
