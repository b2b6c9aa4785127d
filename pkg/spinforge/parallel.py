"""Order-preserving fan-out of independent scan points."""

import logging
import os
from typing import Callable, Iterable, List, TypeVar

from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

THREADS_ENV = "SPINFORGE_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def thread_cap() -> int:
    """Worker count from ``SPINFORGE_THREADS``; 0, unset or malformed means auto."""
    raw = os.getenv(THREADS_ENV, "0").strip()
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return 0
    if value < 0:
        logger.warning(f"Ignoring negative {THREADS_ENV}={value}")
        return 0
    return value


def map_points(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Evaluate ``fn`` on every item, returning results in input order."""
    items = list(items)
    cap = thread_cap()
    n_jobs = -1 if cap == 0 else cap
    if cap == 1 or len(items) < 2:
        return [fn(item) for item in items]
    logger.debug(f"Evaluating {len(items)} points with n_jobs={n_jobs}")
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(item) for item in items)
