"""Worker pools with deterministic, order-preserving results.

Work is always split into fixed chunks that do not depend on the worker
count, so every output is identical for any number of workers.
"""
from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Any, Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_THREADS = "LFRASTER_THREADS"


def default_workers() -> int:
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        return default_workers()
    if workers <= 0:
        return os.cpu_count() or 1
    return workers


def thread_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = 1) -> list[R]:
    items = list(items)
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


# Read-only state handed to forked workers; set just before the pool starts.
_FORK_STATE: Any = None


def _call_with_state(args):
    fn, item = args
    return fn(_FORK_STATE, item)


def process_map(fn: Callable[[Any, T], R], state: Any, items: Sequence[T], workers: int | None = 1) -> list[R]:
    """Map ``fn(state, item)`` over items in forked processes.

    ``state`` reaches the children through fork's copy-on-write memory
    instead of pickling. Falls back to in-process execution for a single
    worker or on platforms without fork.
    """
    global _FORK_STATE
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1 or "fork" not in mp.get_all_start_methods():
        return [fn(state, it) for it in items]
    _FORK_STATE = state
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=ctx) as ex:
            return list(ex.map(_call_with_state, [(fn, it) for it in items]))
    finally:
        _FORK_STATE = None
