"""Order-preserving chunked map, capped by ``SPPA_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("SPPA_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def map_ordered(fn, items, min_chunk: int = 64) -> list:
    """``[fn(x) for x in items]``, possibly spread over threads.

    Each item is computed independently, so the result is identical to the
    serial loop regardless of thread count.
    """
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2 * min_chunk:
        return [fn(x) for x in items]
    size = max(min_chunk, -(-len(items) // n))
    chunks = [items[i:i + size] for i in range(0, len(items), size)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        parts = pool.map(lambda chunk: [fn(x) for x in chunk], chunks)
    return [y for part in parts for y in part]
