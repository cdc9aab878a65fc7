"""Deterministic fan-out for embarrassingly parallel replication loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

ENV_THREADS = "RD_TOOLKIT_THREADS"


def resolve_threads(threads: int | None) -> int:
    """Explicit argument wins; otherwise the environment, otherwise 1."""
    if threads is not None:
        if threads < 1:
            raise ValueError("threads must be >= 1")
        return int(threads)
    raw = os.environ.get(ENV_THREADS, "").strip()
    if raw:
        value = int(raw)
        if value < 1:
            raise ValueError(f"{ENV_THREADS} must be >= 1, got {raw!r}")
        return value
    return 1


def run_indexed(task: Callable[[int], T], count: int,
                threads: int = 1) -> Sequence[T]:
    """Evaluate ``task(0..count-1)``, returning results in index order.

    Each task must be a pure function of its index (replications derive
    their RNG from per-index substreams), so the output is identical for
    any worker count; callers combine the ordered results with exact
    summation to keep the reduction associativity-free.
    """
    if threads <= 1 or count <= 1:
        return [task(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
        return list(pool.map(task, range(count)))
