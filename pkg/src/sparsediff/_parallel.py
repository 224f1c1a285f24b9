"""Ordered parallel map over independent tasks."""
from __future__ import annotations

import multiprocessing as mp


def pmap(fn, tasks, workers: int = 1):
    """``[fn(t) for t in tasks]``, optionally in worker processes.

    Results come back in task order, so reductions over them are independent
    of the worker count.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = mp.get_context("fork")
    with ctx.Pool(min(workers, len(tasks))) as pool:
        return pool.map(fn, tasks, chunksize=1)
