"""Replicate-parallel execution with schedule-independent results.

Every replicate derives its own generator from (master seed, replicate
index, spec digest), so the only job of this module is to run
``fn(*args, rep)`` for each replicate index and return the results in
index order.  With ``workers`` unset or 1 the map runs serially; larger
values use a process pool whose output ordering is fixed by ``starmap``,
making results byte-identical across worker counts.
"""

from __future__ import annotations

import multiprocessing
from typing import Callable, Sequence

__all__ = ["map_replicates"]


def map_replicates(
    fn: Callable,
    reps: int,
    workers: int | None = None,
    args: Sequence = (),
) -> list:
    """Run ``fn(*args, rep)`` for rep in [0, reps), results in index order."""
    if reps < 0:
        raise ValueError("replicate count must be >= 0")
    args = tuple(args)
    if not workers or workers <= 1 or reps <= 1:
        return [fn(*args, rep) for rep in range(reps)]
    with multiprocessing.get_context("fork").Pool(
        processes=min(workers, reps)
    ) as pool:
        return pool.starmap(_wrap, [(fn, args, rep) for rep in range(reps)])


def _wrap(fn: Callable, args: tuple, rep: int):
    return fn(*args, rep)
