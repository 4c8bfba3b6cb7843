"""Deterministic chunked parallelism.

Work is split into fixed index ranges processed possibly out of order, but
partial results are merged in chunk order, so outputs never depend on the
worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

R = TypeVar("R")


def chunk_ranges(n: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]


def map_chunks(
    fn: Callable[[int, int], R], ranges: Sequence[tuple[int, int]], workers: int | None
) -> list[R]:
    """Apply fn(lo, hi) to every range; results come back in range order."""
    if workers is None or workers <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]
