"""Deterministic worker-pool helper.

The env var TORUSLAB_THREADS caps the worker count (default 1 = serial).
The integrator kernels release the GIL, so thread pools give real speedups
for trajectory batches; results are always collected in input order, so the
output is independent of the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    raw = os.environ.get("TORUSLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def tmap(fn, items):
    """Map preserving order; threaded when TORUSLAB_THREADS > 1."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
