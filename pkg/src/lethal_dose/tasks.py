"""Synthetic classification tasks, their samplers and maximum-likelihood labels.

Inputs are plain Python values: an ``int`` for the finite tasks and a tuple of
floats for the Gaussian task.  Labels are ints in ``[0, k)``.  A dataset is a
multiset of ``(x, y)`` samples.
"""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping, NamedTuple, Union

import numpy as np

from .coupling import tv_gaussian_same_cov

InputPoint = Union[int, tuple]


class LabeledSample(NamedTuple):
    x: InputPoint
    y: int


def encode_sample(sample: LabeledSample) -> bytes:
    """Canonical bytes: label as u64 LE, then the id as u64 LE or each coord as f64 LE."""
    x, y = sample
    head = struct.pack("<Q", y)
    if isinstance(x, tuple):
        return head + struct.pack(f"<{len(x)}d", *x)
    return head + struct.pack("<Q", x)


def _as_sample(s) -> LabeledSample:
    return s if type(s) is LabeledSample else LabeledSample(*s)


def _order_key(s: LabeledSample):
    return s.y, s.x


class Dataset:
    """Finite multiset of labeled samples.

    Stored as a map ``sample -> multiplicity``; iteration yields each sample as
    many times as it occurs, in a canonical order so that downstream consumers
    see the same sequence for equal multisets.
    """

    __slots__ = ("_counts", "_size", "_order")

    def __init__(self, samples: Iterable[tuple] | Mapping[tuple, int] = ()):
        counts: Counter = Counter()
        if isinstance(samples, Mapping):
            for s, c in samples.items():
                if c < 0:
                    raise ValueError(f"negative multiplicity {c} for {s!r}")
                if c:
                    counts[_as_sample(s)] += int(c)
        else:
            counts.update(map(_as_sample, samples))
        self._counts = counts
        self._size = sum(counts.values())
        self._order: list[LabeledSample] | None = None

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[LabeledSample]:
        for s in self.distinct():
            for _ in range(self._counts[s]):
                yield s

    def __contains__(self, sample) -> bool:
        return LabeledSample(*sample) in self._counts

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self):
        return hash(frozenset(self._counts.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{tuple(s)}x{c}" if c > 1 else repr(tuple(s)) for s, c in self.items())
        return f"Dataset({{{body}}})"

    def multiplicity(self, sample) -> int:
        return self._counts.get(LabeledSample(*sample), 0)

    def items(self) -> list[tuple[LabeledSample, int]]:
        return [(s, self._counts[s]) for s in self.distinct()]

    def distinct(self) -> list[LabeledSample]:
        if self._order is None:
            self._order = sorted(self._counts, key=_order_key)
        return list(self._order)

    def counts(self) -> dict[LabeledSample, int]:
        return dict(self._counts)

    def labels(self) -> np.ndarray:
        return np.fromiter((s.y for s in self), dtype=np.int64, count=self._size)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, y)`` arrays for vector-input datasets; X has shape (N, d)."""
        samples = list(self)
        if not samples:
            return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
        X = np.array([s.x for s in samples], dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array([s.y for s in samples], dtype=np.int64)
        return X, y

    def add(self, sample, count: int = 1) -> "Dataset":
        """New dataset with ``count`` more copies of ``sample`` (negative removes)."""
        counts = Counter(self._counts)
        s = LabeledSample(*sample)
        counts[s] += count
        if counts[s] < 0:
            raise ValueError(f"cannot remove {-count} copies of {s!r}")
        return Dataset({k: v for k, v in counts.items() if v})

    def filter(self, keep) -> "Dataset":
        return Dataset({s: c for s, c in self._counts.items() if keep(s)})


@dataclass(frozen=True)
class BijectionTask:
    """|X| = |Y| = k with a hidden bijection ``g``; P(x, y) = 1[g(x) = y] / k."""

    k: int
    g: tuple[int, ...]

    kind = "bijection"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("bijection task needs k >= 2")
        object.__setattr__(self, "g", tuple(int(v) for v in self.g))
        if sorted(self.g) != list(range(self.k)):
            raise ValueError("g must be a permutation of range(k)")

    @classmethod
    def random(cls, k: int, rng: np.random.Generator) -> "BijectionTask":
        return cls(k, tuple(int(v) for v in rng.permutation(k)))

    @property
    def n_labels(self) -> int:
        return self.k

    @property
    def n_inputs(self) -> int:
        return self.k

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        xs = rng.integers(0, self.k, size=n)
        g = self.g
        return Dataset((int(x), g[x]) for x in xs)

    def ml_label(self, x: InputPoint) -> int:
        _check_discrete(x, self.k)
        return self.g[x]

    def to_json(self) -> dict:
        return {"type": self.kind, "k": self.k, "g": list(self.g)}


@dataclass(frozen=True)
class MemorizationTask:
    """|X| = m inputs, k labels, hidden labelling ``g``; P(x, y) = 1[g(x) = y] / m."""

    m: int
    k: int
    g: tuple[int, ...]

    kind = "memorization"

    def __post_init__(self):
        if self.m < 1 or self.k < 2:
            raise ValueError("memorization task needs m >= 1 and k >= 2")
        object.__setattr__(self, "g", tuple(int(v) for v in self.g))
        if len(self.g) != self.m or any(not 0 <= v < self.k for v in self.g):
            raise ValueError("g must hold m labels in range(k)")

    @classmethod
    def random(cls, m: int, k: int, rng: np.random.Generator) -> "MemorizationTask":
        return cls(m, k, tuple(int(v) for v in rng.integers(0, k, size=m)))

    @property
    def n_labels(self) -> int:
        return self.k

    @property
    def n_inputs(self) -> int:
        return self.m

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        xs = rng.integers(0, self.m, size=n)
        g = self.g
        return Dataset((int(x), g[x]) for x in xs)

    def ml_label(self, x: InputPoint) -> int:
        _check_discrete(x, self.m)
        return self.g[x]

    def to_json(self) -> dict:
        return {"type": self.kind, "m": self.m, "k": self.k, "g": list(self.g)}


@dataclass(frozen=True)
class GaussianTask:
    """k classes with uniform prior; class y is N(centers[y], I) in R^d."""

    centers: tuple[tuple[float, ...], ...]

    kind = "gaussian"

    def __post_init__(self):
        centers = tuple(tuple(float(c) for c in np.atleast_1d(mu)) for mu in self.centers)
        object.__setattr__(self, "centers", centers)
        if len(centers) < 2:
            raise ValueError("gaussian task needs k >= 2 centers")
        if len({len(c) for c in centers}) != 1 or len(centers[0]) < 1:
            raise ValueError("all centers must share one dimension d >= 1")

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def d(self) -> int:
        return len(self.centers[0])

    @property
    def n_labels(self) -> int:
        return self.k

    @cached_property
    def center_array(self) -> np.ndarray:
        arr = np.array(self.centers, dtype=float)
        arr.setflags(write=False)
        return arr

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        ys = rng.integers(0, self.k, size=n)
        X = self.center_array[ys] + rng.standard_normal((n, self.d))
        return Dataset((tuple(row.tolist()), int(y)) for row, y in zip(X, ys))

    def sample_inputs(self, n: int, rng: np.random.Generator) -> list[tuple]:
        """Draw n inputs from the marginal of P (labels discarded)."""
        return [s.x for s in self.sample(n, rng)]

    def distances(self, x: InputPoint) -> np.ndarray:
        x = _check_vector(x, self.d)
        return np.linalg.norm(self.center_array - x, axis=1)

    def ml_label(self, x: InputPoint) -> int:
        # argmin returns the first minimum: ties go to the smaller label
        return int(np.argmin(self.distances(x)))

    def two_closest(self, x: InputPoint) -> tuple[int, int, float, float]:
        """Labels and distances of the closest and second-closest centers."""
        dist = self.distances(x)
        order = np.argsort(dist, kind="stable")
        y1, y2 = int(order[0]), int(order[1])
        return y1, y2, float(dist[y1]), float(dist[y2])

    def gap_delta(self, x: InputPoint) -> float:
        """TV distance between unit Gaussians whose centers are d2 - d1 apart."""
        _, _, d1, d2 = self.two_closest(x)
        return tv_gaussian_same_cov(np.zeros(1), np.array([d2 - d1]))

    def to_json(self) -> dict:
        return {"type": self.kind, "k": self.k, "d": self.d, "centers": [list(c) for c in self.centers]}


Task = Union[BijectionTask, MemorizationTask, GaussianTask]


def gaussian_gap_delta(task: GaussianTask, x: InputPoint) -> float:
    return task.gap_delta(x)


def sample(task: Task, n: int, rng: np.random.Generator) -> Dataset:
    if n < 0:
        raise ValueError("n must be >= 0")
    return task.sample(n, rng)


def ml_label(task: Task, x: InputPoint) -> int:
    return task.ml_label(x)


def task_from_json(obj: Mapping | str, rng: np.random.Generator | None = None) -> Task:
    """Build a task from its JSON object; missing ``g``/``centers`` are drawn from ``rng``."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("type")
    if kind == "bijection":
        k = int(obj["k"])
        if "g" in obj:
            return BijectionTask(k, tuple(obj["g"]))
        return BijectionTask.random(k, _need(rng))
    if kind == "memorization":
        m, k = int(obj["m"]), int(obj["k"])
        if "g" in obj:
            return MemorizationTask(m, k, tuple(obj["g"]))
        return MemorizationTask.random(m, k, _need(rng))
    if kind == "gaussian":
        if "centers" in obj:
            task = GaussianTask(tuple(tuple(c) for c in obj["centers"]))
        else:
            k, d = int(obj["k"]), int(obj["d"])
            task = GaussianTask(tuple(map(tuple, _need(rng).normal(0, 3, size=(k, d)))))
        if "k" in obj and int(obj["k"]) != task.k:
            raise ValueError("k does not match number of centers")
        if "d" in obj and int(obj["d"]) != task.d:
            raise ValueError("d does not match center dimension")
        return task
    raise ValueError(f"unknown task type {kind!r}")


def task_to_json(task: Task) -> dict:
    return task.to_json()


def _need(rng):
    if rng is None:
        raise ValueError("task JSON omits hidden structure and no rng was given")
    return rng


def _check_discrete(x, size: int) -> None:
    if isinstance(x, (tuple, list, np.ndarray)) or isinstance(x, bool):
        raise TypeError(f"expected a discrete input id, got {x!r}")
    if not 0 <= int(x) < size:
        raise ValueError(f"input {x} out of range [0, {size})")


def _check_vector(x, d: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != d:
        raise ValueError(f"expected a vector of length {d}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("input has non-finite coordinates")
    return arr


def is_vector(x) -> bool:
    return isinstance(x, tuple)

