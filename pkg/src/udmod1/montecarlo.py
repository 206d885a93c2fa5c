"""Deterministic Monte Carlo plumbing: seeded streams and ordered fan-out.

Every stochastic driver derives per-task generators from (seed, lane indices)
through ``numpy.random.SeedSequence``, and reduces partial results in a fixed
order, so results are bit-identical for a given seed regardless of the worker
count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def rng_stream(seed: int, *lane: int) -> np.random.Generator:
    return np.random.default_rng([0x5EED, seed, *lane])


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` over ``items`` preserving order; forks worker processes when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunk_ranges(total: int, chunk: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def complex_mean_stderr(values: np.ndarray) -> tuple[complex, float]:
    """Mean of complex samples and the stderr of its component along the mean direction."""
    mean = complex(np.mean(values))
    n = len(values)
    if n < 2:
        return mean, 0.0
    mod = abs(mean)
    if mod == 0.0:
        proj = np.real(values)
    else:
        proj = np.real(values * np.conj(mean / mod))
    return mean, float(np.std(proj, ddof=1) / np.sqrt(n))
