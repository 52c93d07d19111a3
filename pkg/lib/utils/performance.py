"""
Performance utilities for aonkit
Worker pool for independent training repetitions and a wall-clock stopwatch.

Version 0.1.0 - Approximated orthonormal normalisation toolkit
"""
import os
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional

from lib.system import default_thread_count
from lib.utils.errors import ConfigError

logger = logging.getLogger("aonkit")


def resolve_thread_count(requested: Optional[int] = None) -> int:
    """
    Number of repetitions allowed to run concurrently.

    Args:
        requested: Explicit cap; when None, AONKIT_THREADS, then the physical core count

    Returns:
        A positive thread count
    """
    if requested is None:
        raw = os.environ.get("AONKIT_THREADS")
        if raw is None or raw.strip() == "":
            return default_thread_count()
        try:
            requested = int(raw)
        except ValueError:
            raise ConfigError(f"AONKIT_THREADS must be an integer, got {raw!r}")
    if requested < 1:
        raise ConfigError(f"thread count must be >= 1, got {requested}")
    return requested


class RepetitionPool:
    """
    Runs independent jobs (one model per job) on a bounded thread pool.

    Results come back in submission order regardless of completion order, so
    output built from them stays deterministic.
    """

    def __init__(self, threads: Optional[int] = None):
        self.threads = resolve_thread_count(threads)

    def map(self, func: Callable[[Any], Any], jobs: Iterable[Any],
            on_result: Optional[Callable[[Any], None]] = None) -> List[Any]:
        """
        Apply func to every job.

        Args:
            func: Job function
            jobs: Job arguments
            on_result: Called with each result, in submission order

        Returns:
            Results in submission order
        """
        jobs = list(jobs)
        results = []
        if self.threads == 1 or len(jobs) <= 1:
            for job in jobs:
                result = func(job)
                if on_result is not None:
                    on_result(result)
                results.append(result)
            return results

        logger.info(f"Running {len(jobs)} repetitions on {self.threads} threads")
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            futures = [executor.submit(func, job) for job in jobs]
            for future in futures:
                result = future.result()
                if on_result is not None:
                    on_result(result)
                results.append(result)
        return results


class Stopwatch:
    """Context manager measuring elapsed wall time with perf_counter."""

    def __init__(self):
        self.start = 0.0
        self.elapsed = 0.0

    def __enter__(self) -> "Stopwatch":
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.elapsed = time.perf_counter() - self.start
