"""Order-preserving worker pool used for independent per-parameter solves."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigurationError


def thread_count(threads: int | None = None) -> int:
    """Worker count from the argument, else ``REDUX_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get("REDUX_THREADS", "").strip() or "1"
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigurationError(f"REDUX_THREADS must be a positive integer, got {raw!r}") from None
    if int(threads) < 1:
        raise ConfigurationError(f"thread count must be positive, got {threads}")
    return int(threads)


def parallel_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; result order is input order."""
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
