"""
Order-preserving parallel map over fixed chunks.

Results always come back in input order, and callers reduce them sequentially,
so the output does not depend on the number of worker threads.
"""

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")


def chunk_slices(n: int, chunk_size: int) -> list[slice]:
    """Split ``range(n)`` into consecutive slices of at most ``chunk_size``."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    starts = range(0, n, chunk_size)
    return [slice(start, min(start + chunk_size, n)) for start in starts]


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """
    Apply ``fn`` to every item, possibly in parallel, preserving order.

    Args:
        fn: Pure function applied to each item
        items: Work items
        threads: Maximum worker count; 1 runs inline

    Returns:
        list[R]: Results in the order of ``items``
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))

