"""Element-parallel evaluation with a thread cap.

Work is always split into chunks of a fixed size, so the arithmetic (and
therefore every result bit) is independent of the number of threads.  The
``GFE_THREADS`` environment variable caps the worker count; BLAS threads are
capped to the same number.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext

CHUNK_POINTS = 8192


def thread_count():
    env = os.environ.get("GFE_THREADS", "").strip()
    cpus = os.cpu_count() or 1
    if not env:
        return cpus
    try:
        n = int(env)
    except ValueError:
        return 1
    return max(1, min(n, cpus))


def _blas_limit(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=n)


def map_chunks(fn, n_items, chunk=CHUNK_POINTS):
    """Apply ``fn(start, stop)`` over consecutive chunks, returning results in order."""
    bounds = [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)] or [(0, 0)]
    workers = min(thread_count(), len(bounds))
    with _blas_limit(workers):
        if workers == 1:
            return [fn(a, b) for a, b in bounds]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda ab: fn(*ab), bounds))
