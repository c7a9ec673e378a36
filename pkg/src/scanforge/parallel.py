"""Bounded, order-preserving parallel map over pure work items.

Workers are separate processes (the pipeline is CPU-bound Python + numpy, so
threads would serialize on the GIL). ``fn`` must be picklable: a top-level
function or a functools.partial of one. Results come back in input order, so
output is identical for any worker count.
"""
from __future__ import annotations

import multiprocessing as mp
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T] | Iterable[T], jobs: int = 1) -> list[R]:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=min(jobs, len(items))) as pool:
        return pool.map(fn, items, chunksize=1)
