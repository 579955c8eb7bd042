"""Constructed poisoning transforms and attack-size accounting.

Attack size is the multiset symmetric distance between the clean and the
poisoned training set, so a relabelled or moved sample costs 2 (one removal,
one insertion).  Each transform also reports the expected number of samples
it touches, which is the count used in the lethal-dose closed forms.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .coupling import GaussianDistribution, coupled_dataset_transform, tv_gaussian_same_cov
from .tasks import Dataset, GaussianTask, LabeledSample, Task


def symmetric_distance(D: Dataset, D2: Dataset) -> int:
    """Minimum number of insertions plus removals turning D into D2."""
    a, b = D.counts(), D2.counts()
    return sum(abs(a.get(s, 0) - b.get(s, 0)) for s in a.keys() | b.keys())


def _mass(task: Task, keep) -> float:
    """P(sample satisfies ``keep``) under the task's clean distribution, finite tasks only."""
    n_inputs = task.n_inputs
    return sum(keep(LabeledSample(x, task.g[x])) for x in range(n_inputs)) / n_inputs


class AttackTransform:
    name = "attack"

    def apply(self, dataset: Dataset, rng: np.random.Generator | None = None) -> Dataset:
        raise NotImplementedError

    def expected_touched(self, N: int, task: Task) -> float:
        """Expected number of clean samples altered, E over D ~ P^N."""
        raise NotImplementedError

    def expected_size(self, N: int, task: Task) -> float:
        """Expected symmetric distance |T(D) - D|."""
        return 2.0 * self.expected_touched(N, task)

    def to_json(self) -> dict:
        raise NotImplementedError


class IdentityAttack(AttackTransform):
    name = "identity"

    def apply(self, dataset, rng=None):
        return dataset

    def expected_touched(self, N, task):
        return 0.0

    def to_json(self):
        return {"name": self.name, "params": {}}


def _relabel(dataset: Dataset, mapping) -> Dataset:
    out: dict = {}
    for s, c in dataset.items():
        t = mapping(s)
        out[t] = out.get(t, 0) + c
    return Dataset(out)


class LabelSwapAttack(AttackTransform):
    """Exchange labels y0 and y1 on every sample."""

    name = "label_swap"

    def __init__(self, y0: int, y1: int):
        if y0 == y1:
            raise ValueError("y0 and y1 must differ")
        self.y0, self.y1 = int(y0), int(y1)

    def _swap(self, y: int) -> int:
        return self.y1 if y == self.y0 else self.y0 if y == self.y1 else y

    def apply(self, dataset, rng=None):
        return _relabel(dataset, lambda s: LabeledSample(s.x, self._swap(s.y)))

    def expected_touched(self, N, task):
        if task.kind == "gaussian":
            return 2.0 * N / task.k
        return N * _mass(task, lambda s: s.y in (self.y0, self.y1))

    def to_json(self):
        return {"name": self.name, "params": {"y0": self.y0, "y1": self.y1}}


class RemovalAttack(AttackTransform):
    """Delete every copy of (x0, y0)."""

    name = "removal"

    def __init__(self, x0, y0: int):
        self.target = LabeledSample(x0, int(y0))

    def apply(self, dataset, rng=None):
        return dataset.filter(lambda s: s != self.target)

    def expected_touched(self, N, task):
        if task.kind == "gaussian":
            return 0.0
        return N * _mass(task, lambda s: s == self.target)

    def expected_size(self, N, task):
        return self.expected_touched(N, task)

    def to_json(self):
        return {"name": self.name, "params": {"x0": self.target.x, "y0": self.target.y}}


class PerInputSwapAttack(AttackTransform):
    """Exchange labels y0 and y1 only on samples whose input is x0."""

    name = "per_input_swap"

    def __init__(self, x0, y0: int, y1: int):
        if y0 == y1:
            raise ValueError("y0 and y1 must differ")
        self.x0, self.y0, self.y1 = x0, int(y0), int(y1)

    def _map(self, s: LabeledSample) -> LabeledSample:
        if s.x != self.x0:
            return s
        if s.y == self.y0:
            return LabeledSample(s.x, self.y1)
        if s.y == self.y1:
            return LabeledSample(s.x, self.y0)
        return s

    def apply(self, dataset, rng=None):
        return _relabel(dataset, self._map)

    def expected_touched(self, N, task):
        if task.kind == "gaussian":
            return 0.0
        return N * _mass(task, lambda s: s.x == self.x0 and s.y in (self.y0, self.y1))

    def to_json(self):
        return {"name": self.name, "params": {"x0": self.x0, "y0": self.y0, "y1": self.y1}}


def shifted_center(mu2: np.ndarray, x0: np.ndarray, d1: float, d2: float, epsilon: float) -> np.ndarray:
    """mu2 pulled toward x0 so that it ends up at distance d2 - (1+eps)(d2-d1) from x0."""
    return mu2 - (d2 - d1) / d2 * (1.0 + epsilon) * (mu2 - x0)


class GaussianShiftAttack(AttackTransform):
    """Move the runner-up class toward x0 through the maximal coupling of its old and new law."""

    name = "gaussian_shift"

    def __init__(self, task: GaussianTask, x0, epsilon: float = 0.01):
        if not epsilon > 0:
            raise ValueError("epsilon must be > 0")
        y1, y2, d1, d2 = task.two_closest(x0)
        if not d1 < d2:
            raise ValueError("the two closest centers are equidistant from x0; no unique ML label")
        self.task = task
        self.x0 = tuple(float(v) for v in np.atleast_1d(x0))
        self.epsilon = float(epsilon)
        self.y0, self.target_class = y1, y2
        self.d1, self.d2 = d1, d2
        mu2 = task.center_array[y2]
        self.shifted = shifted_center(mu2, np.asarray(self.x0), d1, d2, self.epsilon)
        self.source = GaussianDistribution(mu2)
        self.dest = GaussianDistribution(self.shifted)
        self.delta = tv_gaussian_same_cov(mu2, self.shifted)

    def apply(self, dataset, rng=None):
        if rng is None:
            raise ValueError("gaussian_shift needs an rng")
        moved = [s for s in dataset if s.y == self.target_class]
        if not moved:
            return dataset
        new_inputs, _ = coupled_dataset_transform(self.source, self.dest, [s.x for s in moved], rng)
        out = dataset.filter(lambda s: s.y != self.target_class).counts()
        for x in new_inputs:
            key = LabeledSample(x, self.target_class)
            out[key] = out.get(key, 0) + 1
        return Dataset(out)

    def expected_touched(self, N, task=None):
        return self.delta * N / self.task.k

    def to_json(self):
        return {"name": self.name, "params": {"x0": list(self.x0), "epsilon": self.epsilon}}


def label_swap_attack(y0: int, y1: int) -> LabelSwapAttack:
    return LabelSwapAttack(y0, y1)


def removal_attack(x0, y0: int) -> RemovalAttack:
    return RemovalAttack(x0, y0)


def per_input_swap_attack(x0, y0: int, y1: int) -> PerInputSwapAttack:
    return PerInputSwapAttack(x0, y0, y1)


def gaussian_shift_attack(task: GaussianTask, x0, epsilon: float = 0.01) -> GaussianShiftAttack:
    return GaussianShiftAttack(task, x0, epsilon)


def choose_swap_target(y0: int, k: int, proba: Mapping[int, float] | None = None) -> int:
    """Label other than y0 the learner is least likely to output; (y0 + 1) mod k if unknown."""
    if not proba:
        return (y0 + 1) % k
    return min((y for y in range(k) if y != y0), key=lambda y: (proba.get(y, 0.0), y))


def matched_attack(task: Task, x0, y1: int | None = None, epsilon: float = 0.01) -> AttackTransform:
    """The construction that breaks every plausible learner on ``task`` at ``x0``."""
    y0 = task.ml_label(x0)
    if task.kind == "bijection":
        return LabelSwapAttack(y0, (y0 + 1) % task.k if y1 is None else y1)
    if task.kind == "memorization":
        return RemovalAttack(x0, y0)
    return GaussianShiftAttack(task, x0, epsilon)


def attack_from_json(obj: Mapping | str, task: Task | None = None) -> AttackTransform:
    if isinstance(obj, str):
        obj = json.loads(obj)
    name = obj.get("name")
    params = dict(obj.get("params", {}))
    if name == "identity":
        return IdentityAttack()
    if name == "label_swap":
        return LabelSwapAttack(**params)
    if name == "removal":
        return RemovalAttack(_as_input(params["x0"]), params["y0"])
    if name == "per_input_swap":
        return PerInputSwapAttack(_as_input(params["x0"]), params["y0"], params["y1"])
    if name == "gaussian_shift":
        if task is None:
            raise ValueError("gaussian_shift needs the task")
        return GaussianShiftAttack(task, tuple(params["x0"]), params.get("epsilon", 0.01))
    raise ValueError(f"unknown attack {name!r}")


def _as_input(x):
    return tuple(float(v) for v in x) if isinstance(x, (list, tuple)) else int(x)


@dataclass
class AttackReport:
    attack: str
    N: int
    trials: int
    expected_size: float
    expected_touched: float
    realized_mean: float
    realized_sd: float
    touched_mean: float
    post_acc: float
    ci_lo: float
    ci_hi: float
    chance: float

    @property
    def se(self) -> float:
        return (self.post_acc * (1 - self.post_acc) / self.trials) ** 0.5

    @property
    def collapsed(self) -> bool:
        """Post-attack accuracy is within the CI of chance level 1/|Y|."""
        return self.ci_lo <= self.chance

    def to_json(self) -> dict:
        return asdict(self)
