"""Splittable random streams.

Every stochastic routine takes a ``numpy.random.Generator``.  Independent
streams for trials and grid points are derived from a master seed through
``SeedSequence`` spawn keys, so the stream of trial ``i`` does not depend on
how many other trials exist or on which thread runs it.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def experiment_key(name: str) -> int:
    """Stable 32-bit integer for an experiment label."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def stream(seed: int, *key: int | str) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *key)``."""
    spawn_key = tuple(experiment_key(k) if isinstance(k, str) else int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from ``rng`` for deriving a keyed family of streams."""
    return int(rng.integers(0, 2**63 - 1))


def default_threads() -> int:
    env = os.environ.get("LDC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


_threads: int | None = None


def set_threads(n: int | None) -> None:
    """Cap the worker count used by :func:`parallel_map` (``None`` = default)."""
    global _threads
    _threads = None if n is None else max(1, int(n))


def get_threads() -> int:
    return _threads if _threads is not None else default_threads()


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Ordered map over ``items``; output order never depends on scheduling."""
    items = list(items)
    n = threads if threads is not None else get_threads()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def chunks(n: int, parts: int) -> Sequence[range]:
    """Split ``range(n)`` into at most ``parts`` contiguous ranges."""
    parts = max(1, min(parts, n)) if n else 1
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(parts)]
