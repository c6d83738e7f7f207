"""
Deterministic tiling of pointwise kernels over a worker pool

Points are cut into chunks of a fixed size that does not depend on the worker
count, every chunk is written by exactly one worker, and chunks are reassembled
in index order. Results are therefore bitwise identical for any number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List

import numpy as np

CHUNK_SIZE = 4096


def chunk_bounds(count: int, chunk_size: int = CHUNK_SIZE) -> List[tuple]:
    return [(lo, min(lo + chunk_size, count)) for lo in range(0, count, chunk_size)]


def map_chunks(
    func: Callable[[np.ndarray], np.ndarray],
    points: np.ndarray,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """Apply func to consecutive slices of points along axis 0 and concatenate the results"""

    count = points.shape[0]
    bounds = chunk_bounds(count, chunk_size)
    if not bounds:
        return func(points)

    if workers <= 1 or len(bounds) == 1:
        parts = [func(points[lo:hi]) for lo, hi in bounds]
    else:
        # numpy releases the GIL inside the kernels, so threads overlap
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: func(points[b[0]:b[1]]), bounds))

    return np.concatenate(parts, axis=0)


def map_pointwise(
    func: Callable[[np.ndarray], np.ndarray],
    stacked: np.ndarray,
    trailing_dims: int,
    workers: int = 1,
) -> np.ndarray:
    """Run a kernel over a field of per-point objects with `trailing_dims` trailing axes"""

    lead = stacked.shape[: stacked.ndim - trailing_dims]
    flat = stacked.reshape((-1,) + stacked.shape[stacked.ndim - trailing_dims:])
    out = map_chunks(func, flat, workers)
    return out.reshape(lead + out.shape[1:])
