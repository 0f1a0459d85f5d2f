"""Deterministic seed derivation and replication scheduling.

Every random quantity in the package is drawn from a PCG64 stream whose
64-bit seed is derived from (master_seed, stream, index...) via
``numpy.random.SeedSequence``.  Derived seeds depend only on the index
path, never on scheduling, so replications can run on any number of
threads and still reproduce bit-identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

# Stream tags keep seed paths for unrelated draws disjoint.
STREAM_SIMULATION = 0
STREAM_LIMIT_NOISE = 1
STREAM_PARAM_DRAW = 2


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive a 64-bit unsigned seed from a master seed and an index path.

    The path length is folded in ahead of the components, making the
    encoding a prefix code: paths of different arity never alias, and
    SeedSequence's insensitivity to trailing zero words cannot collide
    (master,) with (master, 0).
    """
    if master_seed < 0:
        raise ValueError("master_seed must be nonnegative")
    seq = np.random.SeedSequence(
        [int(master_seed), len(path), *[int(p) for p in path]]
    )
    return int(seq.generate_state(1, np.uint64)[0])


def generator_for(seed: int) -> np.random.Generator:
    """PCG64 generator for a derived 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed))


def replication_seeds(master_seed: int, stream: int, reps: int) -> list[int]:
    """Seeds for ``reps`` independent replications of one stream."""
    return [derive_seed(master_seed, stream, r) for r in range(reps)]


def map_replications(
    fn: Callable[[int], object],
    seeds: Sequence[int],
    threads: int = 1,
) -> list:
    """Apply ``fn(seed)`` per replication, returning results in seed order.

    The result list is indexed by replication regardless of thread count,
    so downstream reductions are schedule-independent.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds))
