"""Worker pool plumbing for data-parallel ensembles.

Tasks are pure functions of a deterministic index range; results come back in
task order, so any commutative merge is independent of the worker count.
"""
import logging
import os
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Any, Callable, Iterable, Optional

logger = logging.getLogger(__name__)

THREADS_ENV = "QML_THREADS"


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def make_executor(threads: Optional[int]) -> Optional[Executor]:
    threads = default_threads() if threads is None else threads
    if threads <= 1:
        return None
    logger.debug(f"Starting process pool with {threads} workers")
    return ProcessPoolExecutor(max_workers=threads)


def chunk_ranges(total: int, size: int) -> list[tuple[int, int]]:
    if size < 1:
        raise ValueError(f"chunk size must be positive, got {size}")
    return [(start, min(start + size, total)) for start in range(0, total, size)]


def run_tasks(fn: Callable[..., Any], tasks: Iterable[tuple], executor: Optional[Executor] = None) -> list[Any]:
    """Apply fn(*task) to every task, in order, serially or on the pool."""
    tasks = list(tasks)
    if executor is None or len(tasks) <= 1:
        return [fn(*task) for task in tasks]
    return list(executor.map(fn, *zip(*tasks)))
