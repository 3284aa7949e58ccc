from __future__ import annotations

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar


logger = logging.getLogger(__name__)

ItemT = TypeVar("ItemT")
ResultT = TypeVar("ResultT")

_local = threading.local()


def worker_count(requested: Optional[int] = None) -> int:
    """Pool size: explicit request, else CT_SPARSE_THREADS, else the available cores."""
    if requested is not None:
        return max(1, int(requested))
    env = os.getenv("CT_SPARSE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring non-integer CT_SPARSE_THREADS=%r", env)
    return max(1, os.cpu_count() or 1)


def _run_marked(fn: Callable[[ItemT], ResultT], item: ItemT) -> ResultT:
    _local.inside = True
    try:
        return fn(item)
    finally:
        _local.inside = False


def ordered_map(
    fn: Callable[[ItemT], ResultT],
    items: Iterable[ItemT],
    *,
    workers: Optional[int] = None,
) -> List[ResultT]:
    """Apply ``fn`` to every item on a thread pool and return results in input order.

    Calls made from inside a pool worker run inline, so nested fan-out never
    multiplies threads. The first exception raised by ``fn`` propagates.
    """
    seq = list(items)
    n_workers = min(worker_count(workers), len(seq)) if seq else 1
    if n_workers <= 1 or getattr(_local, "inside", False):
        return [fn(item) for item in seq]
    with ThreadPoolExecutor(max_workers=n_workers, thread_name_prefix="sparse-ct") as pool:
        return list(pool.map(lambda item: _run_marked(fn, item), seq))


__all__ = ["ordered_map", "worker_count"]
