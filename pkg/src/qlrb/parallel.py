"""Parameter sweeps, optionally spread over worker processes."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import partial

from .truth import NewtonSettings, truth_solve


def pmap(func, items, workers: int = 1):
    """Ordered map; ``func`` and items must pickle when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


def truth_sweep(problem, mus, settings=None, workers: int = 1):
    settings = settings or NewtonSettings()
    return pmap(partial(truth_solve, problem, settings=settings), mus, workers)
