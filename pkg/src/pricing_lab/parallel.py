"""Thread fan-out and counter-based random substreams.

Results never depend on the worker count: work is cut into fixed blocks,
each block draws from ``SeedSequence(seed, spawn_key=(stream, block))``,
and block outputs are combined in block order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

THREADS_ENV = "PRICING_LAB_THREADS"
BLOCK = 50_000

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Ordered map over a thread pool (serial when one thread is allowed)."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as ex:
        return list(ex.map(fn, items))


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, block)))


def block_sizes(samples: int, block: int = BLOCK) -> Sequence[int]:
    full, rest = divmod(samples, block)
    return [block] * full + ([rest] if rest else [])


def seeded_blocks(fn: Callable[[np.random.Generator, int], R], samples: int, seed: int,
                  stream: int = 0, threads: int | None = None) -> list[R]:
    """Run ``fn(rng, size)`` over fixed sample blocks; outputs in block order."""
    sizes = block_sizes(samples)
    return pmap(lambda k: fn(block_rng(seed, k, stream), sizes[k]), range(len(sizes)), threads)
