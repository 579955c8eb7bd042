"""Base learners for the synthetic tasks.

``Learner.train(dataset)`` returns a ``Classifier`` whose ``classify(x, rng)``
returns an int label or :data:`ABSTAIN`.  Learners that guess when the data
says nothing are stochastic; calling ``classify`` with ``rng=None`` replaces
every random choice by the smallest candidate label, which is how the
aggregation module obtains deterministic base learners.
"""

from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from typing import Mapping, Sequence

import numpy as np

from .tasks import Dataset, InputPoint


class _Abstain(enum.Enum):
    ABSTAIN = "⊥"

    def __repr__(self) -> str:
        return "ABSTAIN"


ABSTAIN = _Abstain.ABSTAIN


def is_abstain(pred) -> bool:
    return pred is ABSTAIN


def _pick(candidates: Sequence[int], rng: np.random.Generator | None) -> int:
    """Uniform choice among sorted ``candidates``; the smallest one when derandomized."""
    if rng is None:
        return candidates[0]
    return candidates[int(rng.integers(len(candidates)))]


def _majority(counter: Counter) -> list[int]:
    top = max(counter.values())
    return sorted(y for y, c in counter.items() if c == top)


def _uniform(labels: Sequence[int]) -> dict[int, float]:
    return {y: 1.0 / len(labels) for y in labels}


class Classifier:
    def classify(self, x: InputPoint, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def predict_proba(self, x: InputPoint) -> dict:
        """Exact output distribution of ``classify(x, rng)`` under a fresh rng."""
        raise NotImplementedError


class Learner:
    name = "learner"
    deterministic = False

    def train(self, dataset: Dataset) -> Classifier:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({json.dumps(self.to_json()['params'])})"


class _LookupClassifier(Classifier):
    """Shared logic of the two finite-input learners.

    Inputs present in the training set predict their majority label; majority
    ties are broken uniformly at random (smallest label when derandomized),
    which keeps the learner equivariant under label swaps.
    """

    def __init__(self, by_input: dict, k: int):
        self.by_input = by_input
        self.k = k

    def _fallback(self) -> list[int]:
        return list(range(self.k))

    def candidates(self, x) -> list[int]:
        seen = self.by_input.get(x)
        if seen:
            return _majority(seen)
        return self._fallback()

    def classify(self, x, rng=None):
        return _pick(self.candidates(x), rng)

    def predict_proba(self, x):
        return _uniform(self.candidates(x))


class BijectionClassifier(_LookupClassifier):
    def __init__(self, by_input: dict, k: int, seen_labels: frozenset):
        super().__init__(by_input, k)
        self.seen_labels = seen_labels

    def _fallback(self):
        unseen = [y for y in range(self.k) if y not in self.seen_labels]
        return unseen or list(range(self.k))


def _group_by_input(dataset: Dataset) -> dict:
    groups: dict = defaultdict(Counter)
    for s, c in dataset.items():
        groups[s.x][s.y] += c
    return dict(groups)


class BijectionLearner(Learner):
    """Memorise seen pairs; otherwise guess among labels not yet paired with any input."""

    name = "bijection"

    def __init__(self, k: int):
        if k < 2:
            raise ValueError("k must be >= 2")
        self.k = k

    def train(self, dataset):
        groups = _group_by_input(dataset)
        seen = frozenset(y for counter in groups.values() for y in counter)
        return BijectionClassifier(groups, self.k, seen)

    def to_json(self):
        return {"name": self.name, "params": {"k": self.k}}


class MemorizationLearner(Learner):
    """Majority label of the query's occurrences; otherwise a uniform guess."""

    name = "memorization"

    def __init__(self, m: int, k: int):
        if m < 1 or k < 2:
            raise ValueError("need m >= 1 and k >= 2")
        self.m = m
        self.k = k

    def train(self, dataset):
        return _LookupClassifier(_group_by_input(dataset), self.k)

    def to_json(self):
        return {"name": self.name, "params": {"m": self.m, "k": self.k}}


class NearestMeanClassifier(Classifier):
    def __init__(self, means: np.ndarray, labels: np.ndarray, k: int):
        self.means = means
        self.labels = labels
        self.k = k

    def classify(self, x, rng=None):
        if self.labels.size == 0:
            return _pick(list(range(self.k)), rng)
        dist = np.linalg.norm(self.means - np.asarray(x, dtype=float), axis=1)
        return int(self.labels[np.argmin(dist)])

    def classify_many(self, X: np.ndarray) -> np.ndarray:
        """Deterministic batch prediction (empty model -> label 0)."""
        if self.labels.size == 0:
            return np.zeros(len(X), dtype=np.int64)
        d2 = ((X[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=2)
        return self.labels[np.argmin(d2, axis=1)]

    def predict_proba(self, x):
        if self.labels.size == 0:
            return _uniform(list(range(self.k)))
        return {self.classify(x): 1.0}


class GaussianLearner(Learner):
    """Nearest empirical class mean over the classes present in the training set."""

    name = "gaussian"

    def __init__(self, k: int, d: int):
        if k < 2 or d < 1:
            raise ValueError("need k >= 2 and d >= 1")
        self.k = k
        self.d = d

    def train(self, dataset):
        X, y = dataset.arrays()
        if y.size == 0:
            return NearestMeanClassifier(np.zeros((0, self.d)), y, self.k)
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional inputs, got {X.shape[1]}")
        counts = np.bincount(y, minlength=self.k)
        sums = np.zeros((self.k, self.d))
        np.add.at(sums, y, X)
        present = np.flatnonzero(counts)
        return NearestMeanClassifier(sums[present] / counts[present, None], present, self.k)

    def to_json(self):
        return {"name": self.name, "params": {"k": self.k, "d": self.d}}


class RadiusNNClassifier(Classifier):
    def __init__(self, X: np.ndarray, y: np.ndarray, r: float, k: int):
        self.X = X
        self.y = y
        self.r = r
        self.k = k

    def classify(self, x, rng=None):
        if self.y.size == 0:
            return ABSTAIN
        dist = np.abs(self.X - np.atleast_1d(np.asarray(x, dtype=float))).sum(axis=1)
        inside = self.y[dist <= self.r]
        if inside.size == 0:
            return ABSTAIN
        return int(np.argmax(np.bincount(inside, minlength=self.k)))

    def predict_proba(self, x):
        return {self.classify(x): 1.0}


class RadiusNNLearner(Learner):
    """Majority vote over training points within l1 distance r; abstain on an empty ball."""

    name = "radius_nn"
    deterministic = True

    def __init__(self, r: float, k: int):
        if not r > 0:
            raise ValueError("r must be > 0")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.r = float(r)
        self.k = k

    def train(self, dataset):
        samples = list(dataset)
        if not samples:
            return RadiusNNClassifier(np.zeros((0, 1)), np.zeros(0, dtype=np.int64), self.r, self.k)
        X = np.array([np.atleast_1d(np.asarray(s.x, dtype=float)) for s in samples])
        y = np.array([s.y for s in samples], dtype=np.int64)
        return RadiusNNClassifier(X, y, self.r, self.k)

    def to_json(self):
        return {"name": self.name, "params": {"r": self.r, "k": self.k}}


def bijection_learner(k: int) -> BijectionLearner:
    return BijectionLearner(k)


def memorization_learner(m: int, k: int) -> MemorizationLearner:
    return MemorizationLearner(m, k)


def gaussian_learner(k: int, d: int) -> GaussianLearner:
    return GaussianLearner(k, d)


def radius_nn_learner(r: float, k: int) -> RadiusNNLearner:
    return RadiusNNLearner(r, k)


LEARNERS = {
    "bijection": BijectionLearner,
    "memorization": MemorizationLearner,
    "gaussian": GaussianLearner,
    "radius_nn": RadiusNNLearner,
}


def learner_from_json(obj: Mapping | str) -> Learner:
    if isinstance(obj, str):
        obj = json.loads(obj)
    name = obj.get("name")
    if name not in LEARNERS:
        raise ValueError(f"unknown learner {name!r}; choose from {sorted(LEARNERS)}")
    return LEARNERS[name](**obj.get("params", {}))


def canonical_learner(task) -> Learner:
    """The task's reference learner (the one attaining the clean-accuracy analysis)."""
    if task.kind == "bijection":
        return BijectionLearner(task.k)
    if task.kind == "memorization":
        return MemorizationLearner(task.m, task.k)
    return GaussianLearner(task.k, task.d)
