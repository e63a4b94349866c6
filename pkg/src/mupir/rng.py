"""Reproducible randomness streams.

Every stream is a Philox (counter-based) generator keyed by the run seed plus a
tuple naming its purpose, so per-user and per-trial streams are independent
and do not shift when other streams draw more or fewer values.
"""

import os

import numpy as np

SEED_ENV = "MUPIR_SEED"
DEFAULT_SEED = 20230423

QUERY = 0
FILES = 1
DEMANDS = 2
TRIALS = 3


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else DEFAULT_SEED


def stream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def uniform_symbols(gen: np.random.Generator, B: int, size) -> np.ndarray:
    # Generator.integers rejects out-of-range draws, so there is no modulo bias
    return gen.integers(0, B, size=size, dtype=np.int64)
