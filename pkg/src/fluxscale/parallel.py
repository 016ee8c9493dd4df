"""Worker-pool plumbing; results are order-preserving so parallelism never
shows in outputs."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "FLUXSCALE_THREADS"


def worker_count() -> int:
    """Worker cap: FLUXSCALE_THREADS when set, else up to 4 CPUs."""
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, min(4, os.cpu_count() or 1))


def ordered_map(fn: Callable[[T], R], items: Iterable[T],
                workers: int | None = None) -> Iterator[R]:
    """Like map() but fanned out over a thread pool, results in input order."""
    if workers is None:
        workers = worker_count()
    if workers <= 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, items)
