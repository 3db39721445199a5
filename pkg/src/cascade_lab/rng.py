"""Deterministic stream derivation and chunked parallel execution.

Every random quantity in the package is drawn from a stream keyed by
``(master_seed, tag, *indices)``.  Work is cut into fixed-size chunks and
each chunk owns its own stream, so results depend on the chunk size but
never on how many workers process the chunks.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

# stream tags, one per consumer
CASCADE = 1
POOL = 2
CHAOS_FIELD = 3
TAU = 4
WHITENOISE = 5
DECOMPOSE = 6
INF_PROBE = 7

DEFAULT_CHUNK = 1 << 14


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def default_workers() -> int:
    value = os.environ.get("CASCADE_LAB_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def chunks(count: int, chunk_size: int) -> list[tuple[int, int, int]]:
    """``(index, start, stop)`` triples covering ``range(count)``."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(i, s, min(count, s + chunk_size)) for i, s in enumerate(range(0, count, chunk_size))]


def map_chunks(fn: Callable[..., T], parts: Sequence, workers: int | None = None) -> list[T]:
    """Apply ``fn(*part)`` to every part, preserving order."""
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(parts) <= 1:
        return [fn(*p) for p in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: fn(*p), parts))
