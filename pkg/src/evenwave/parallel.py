"""Thread-count resolution and an order-preserving parallel map."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigurationError

THREADS_ENV = "EVENWAVE_THREADS"

__all__ = ["THREADS_ENV", "thread_count", "ordered_map"]


def thread_count(threads=None):
    """Resolve the worker count: explicit value, then ``EVENWAVE_THREADS``, then CPU count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        else:
            threads = os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise ConfigurationError("thread count must be at least 1")
    return threads


def ordered_map(func, items, threads=None):
    """``[func(x) for x in items]`` evaluated on a thread pool.

    Results come back in input order, so any later reduction is independent
    of scheduling.
    """
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(func, items))
