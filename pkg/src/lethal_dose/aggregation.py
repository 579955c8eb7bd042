"""Deep Partition Aggregation with a pointwise poisoning certificate.

The training set is split by a hash of each sample's canonical bytes, one
base classifier is trained per partition, and the ensemble predicts the
plurality vote (smaller label wins ties).  Inserting or removing one sample
touches one partition and so moves at most one vote, which gives the
certified attack size

    floor( (v[y0] - max_{y != y0} (v[y] + 1[y < y0])) / 2 )

in terms of raw vote counts ``v``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .learners import ABSTAIN, Classifier, Learner
from .rng import parallel_map
from .tasks import Dataset, LabeledSample, encode_sample

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def fnv_partition_hash(sample_bytes: bytes, k_part: int) -> int:
    if k_part < 1:
        raise ValueError("k_part must be >= 1")
    return fnv1a64(sample_bytes) % k_part


@dataclass(frozen=True)
class PartitionPlan:
    k_part: int
    hash: Callable[[bytes, int], int] = fnv_partition_hash

    def __post_init__(self):
        if self.k_part < 1:
            raise ValueError("k_part must be >= 1")

    def assign(self, sample) -> int:
        return self.hash(encode_sample(LabeledSample(*sample)), self.k_part)


def partition(dataset: Dataset, plan: PartitionPlan) -> list[Dataset]:
    buckets: list[dict] = [{} for _ in range(plan.k_part)]
    for s, c in dataset.items():
        buckets[plan.assign(s)][s] = c
    return [Dataset(b) for b in buckets]


@dataclass(frozen=True)
class VoteProfile:
    """Raw per-class vote counts over ``k_part`` base classifiers."""

    k_part: int
    votes: tuple[int, ...]
    abstains: int = 0

    def __post_init__(self):
        if any(v < 0 for v in self.votes) or self.abstains < 0:
            raise ValueError("vote counts must be non-negative")
        if sum(self.votes) + self.abstains != self.k_part:
            raise ValueError("class votes plus abstains must equal k_part")

    @classmethod
    def from_predictions(cls, preds: Sequence, n_classes: int) -> "VoteProfile":
        votes = [0] * n_classes
        abstains = 0
        for p in preds:
            if p is ABSTAIN:
                abstains += 1
            else:
                votes[p] += 1
        return cls(len(preds), tuple(votes), abstains)

    @property
    def n_classes(self) -> int:
        return len(self.votes)

    @property
    def counts(self) -> np.ndarray:
        """Vote shares (1/k_part) * #votes per class."""
        return np.asarray(self.votes, dtype=float) / self.k_part

    def winner(self) -> int:
        # first maximum -> smaller label on ties; all-abstain -> label 0
        return max(range(self.n_classes), key=lambda y: (self.votes[y], -y))

    def to_json(self) -> dict:
        return {"k_part": self.k_part, "votes": {str(y): v for y, v in enumerate(self.votes) if v},
                "abstains": self.abstains}


@dataclass(frozen=True)
class Certificate:
    prediction: int
    certified_size: int
    raw_bound: float
    profile: VoteProfile = field(repr=False)

    def to_json(self) -> dict:
        return {
            "prediction": self.prediction,
            "certified_size": self.certified_size,
            "raw_bound": self.raw_bound,
            "k_part": self.profile.k_part,
            "votes": {str(y): v for y, v in enumerate(self.profile.votes) if v},
            "abstains": self.profile.abstains,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def certify_margin(profile: VoteProfile, y0: int) -> int:
    """Twice the raw bound: v[y0] - max_{y != y0}(v[y] + 1[y < y0]) (an exact integer)."""
    rivals = [v + (y < y0) for y, v in enumerate(profile.votes) if y != y0]
    return profile.votes[y0] - max(rivals, default=0)


def dpa_certify(profile: VoteProfile, prediction: int) -> Certificate:
    if not 0 <= prediction < profile.n_classes or prediction != profile.winner():
        raise ValueError(f"prediction {prediction} is not the aggregate vote winner {profile.winner()}")
    margin = certify_margin(profile, prediction)
    raw = margin / 2
    return Certificate(prediction, max(0, math.floor(raw)), raw, profile)


class DPAModel(Classifier):
    def __init__(self, classifiers: list[Classifier], n_classes: int):
        self.classifiers = classifiers
        self.n_classes = n_classes

    @property
    def k_part(self) -> int:
        return len(self.classifiers)

    def vote(self, x) -> VoteProfile:
        # rng=None: every base learner runs in its deterministic mode
        preds = [clf.classify(x, None) for clf in self.classifiers]
        return VoteProfile.from_predictions(preds, self.n_classes)

    def vote_matrix(self, queries: Sequence) -> np.ndarray:
        """Per-partition predictions, shape (len(queries), k_part); -1 marks abstain."""
        vectors = bool(queries) and isinstance(queries[0], tuple)
        X = np.array(queries, dtype=float) if vectors else None
        cols = []
        for clf in self.classifiers:
            if vectors and hasattr(clf, "classify_many"):
                cols.append(clf.classify_many(X))
            else:
                cols.append(np.array([vote_code(clf.classify(x, None)) for x in queries], dtype=np.int64))
        if not cols:
            return np.zeros((len(queries), 0), dtype=np.int64)
        return np.stack(cols, axis=1)

    def classify(self, x, rng=None):
        return self.vote(x).winner()

    def predict_proba(self, x):
        return {self.classify(x): 1.0}

    def certify(self, x) -> Certificate:
        profile = self.vote(x)
        return dpa_certify(profile, profile.winner())


def vote_code(pred) -> int:
    return -1 if pred is ABSTAIN else int(pred)


def profile_from_codes(codes: np.ndarray, n_classes: int) -> VoteProfile:
    votes = np.bincount(codes[codes >= 0], minlength=n_classes)
    return VoteProfile(int(codes.size), tuple(int(v) for v in votes), int((codes < 0).sum()))


class DPALearner(Learner):
    """DPA as a learner: ``train`` partitions and fits one base classifier per partition."""

    name = "dpa"
    deterministic = True

    def __init__(self, base: Learner, k_part: int, n_classes: int | None = None,
                 plan: PartitionPlan | None = None, threads: int | None = 1):
        self.base = base
        self.plan = plan or PartitionPlan(k_part)
        if self.plan.k_part != k_part:
            raise ValueError("plan.k_part disagrees with k_part")
        self.n_classes = n_classes if n_classes is not None else base.k
        self.threads = threads

    @property
    def k_part(self) -> int:
        return self.plan.k_part

    def train(self, dataset: Dataset) -> DPAModel:
        parts = partition(dataset, self.plan)
        return DPAModel(parallel_map(self.base.train, parts, self.threads), self.n_classes)

    def to_json(self):
        return {"name": self.name, "params": {"k_part": self.k_part, "base": self.base.to_json()}}


def dpa_predict(dataset: Dataset, plan: PartitionPlan, base: Learner, x0,
                n_classes: int | None = None) -> tuple[int, VoteProfile]:
    model = DPALearner(base, plan.k_part, n_classes, plan).train(dataset)
    profile = model.vote(x0)
    return profile.winner(), profile
