"""Deterministic replicate-parallel map.

Tasks are ranges of replicate indices; each task returns one row (or scalar
slot) per replicate, and rows are written back by index.  Chunk boundaries
depend only on the workload, never on the worker count, so output is
bit-identical whether run inline or on a process pool.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

__all__ = ["replicate_map", "task_rows"]

_TARGET_ELEMENTS = 1 << 22  # per-task array budget, keeps worker memory flat


def task_rows(reps: int, item_size: int) -> int:
    """Replicates per task for a per-replicate workload of ``item_size``."""
    rows = max(16, _TARGET_ELEMENTS // max(1, item_size))
    return min(reps, rows)


def replicate_map(task, reps: int, *, item_size: int, threads: int = 1) -> np.ndarray:
    """Run ``task(r0, r1) -> ndarray[(r1 - r0), ...]`` over all replicates.

    Returns the per-replicate results stacked in index order.  ``task`` must
    be picklable (module-level function or functools.partial of one) and pure
    given its arguments.
    """
    if reps <= 0:
        raise ValueError("reps must be positive")
    rows = task_rows(reps, item_size)
    ranges = [(r0, min(reps, r0 + rows)) for r0 in range(0, reps, rows)]
    if threads is None:
        threads = 1
    if threads <= 1 or len(ranges) == 1:
        parts = [task(r0, r1) for r0, r1 in ranges]
    else:
        parts = [None] * len(ranges)
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(task, r0, r1): i for i, (r0, r1) in enumerate(ranges)
            }
            for fut, i in futures.items():
                parts[i] = fut.result()
    return np.concatenate([np.atleast_1d(p) for p in parts], axis=0)
