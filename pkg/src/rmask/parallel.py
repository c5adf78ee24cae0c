"""Worker-count control for the numba kernels.

All parallel kernels write disjoint output slots, so results never depend on
how many threads run them. This module only decides how many threads that is.
"""

from __future__ import annotations

import contextlib
import logging

import numba

logger = logging.getLogger(__name__)


def max_workers() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def set_workers(n: int | None) -> int:
    """Set the thread count used by parallel kernels; returns the effective value.

    Requests above the pool size fixed at import time (``NUMBA_NUM_THREADS``)
    are clamped with a warning.
    """
    if n is None:
        return numba.get_num_threads()
    if n < 1:
        raise ValueError(f"workers must be >= 1, got {n}")
    limit = max_workers()
    if n > limit:
        logger.warning("requested %d workers but only %d threads are available", n, limit)
        n = limit
    numba.set_num_threads(n)
    return n


@contextlib.contextmanager
def workers(n: int | None):
    previous = numba.get_num_threads()
    try:
        set_workers(n)
        yield numba.get_num_threads()
    finally:
        numba.set_num_threads(previous)
