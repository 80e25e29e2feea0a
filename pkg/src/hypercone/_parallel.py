"""Thread fan-out with ordered results.

Work is always split into the same fixed-size chunks, whatever the thread
count, so every chunk sees identical inputs and the assembled result is
bit-identical for 1 or many threads.
"""
import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "HYPERCONE_THREADS"


def resolve_threads(threads=None):
    """Explicit value, else ``$HYPERCONE_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get(ENV_VAR, "").strip()
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError(f"thread count must be positive, got {threads}")
    return threads


def chunks(total, size):
    return [(i, min(i + size, total)) for i in range(0, total, size)]


def ordered_map(fn, items, threads=None):
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
