"""Seed derivation.

Every random stream in the package is keyed by ``(master seed, *stream id)``
through :class:`numpy.random.SeedSequence`, so results never depend on how
work is split across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Stream tags. Keep stable: changing them changes every seeded result.
SAMPLE = 1
MEGA = 2
INIT = 3
SIGNS = 4
STARTS = 5
TRIALS = 6
STREAM = 7


def generator(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse ``(seed, *key)`` into a fresh 63-bit integer seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1, 2**31], dtype=np.uint64))


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Map ``fn`` over ``items`` keeping input order regardless of ``threads``."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def random_unit_vectors(rng: np.random.Generator, shape: Sequence[int] | int, dim: int) -> np.ndarray:
    """Uniform directions on the unit sphere in ``dim`` dimensions."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    z = rng.standard_normal(shape + (dim,))
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    # a zero draw has probability zero; guard anyway
    norms[norms == 0] = 1.0
    return z / norms
