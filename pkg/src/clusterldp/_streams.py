"""Seed splitting and block-parallel replication loops.

Every random draw in an experiment comes from a generator keyed by
``(seed, purpose, scale_index, block_index)``; replications are grouped into
fixed-size blocks, and block results are combined in block order. The thread
count therefore changes wall time only, never the numbers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

BLOCK_SIZE = 20_000

# purpose codes
REPLICATION = 0
PILOT = 1
SINGLE = 2


def generator(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def block_sizes(n_reps: int, block: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(int(n_reps), block)
    return [block] * full + ([rest] if rest else [])


def run_blocks(
    fn: Callable[[np.random.Generator, int], T],
    n_reps: int,
    seed: int,
    key: Sequence[int],
    threads: int = 1,
    block: int = BLOCK_SIZE,
) -> list[T]:
    """Call ``fn(rng, n)`` once per block and return the results in block order."""
    sizes = block_sizes(n_reps, block)
    jobs = [(generator(seed, REPLICATION, *key, j), n) for j, n in enumerate(sizes)]
    if threads <= 1 or len(jobs) <= 1:
        return [fn(g, n) for g, n in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
