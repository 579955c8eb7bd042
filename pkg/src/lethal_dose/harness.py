"""Monte Carlo experiments: sample complexity, lethal dose, scaling, DPA certificates.

Every routine takes a master ``rng`` only to draw one seed; trial ``i`` of an
experiment then runs on ``stream(seed, i)``, so results are identical for any
thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .aggregation import Certificate, DPALearner, DPAModel, PartitionPlan, dpa_certify, profile_from_codes
from .attacks import AttackReport, AttackTransform, choose_swap_target, matched_attack, symmetric_distance
from .learners import Learner, canonical_learner
from .tasks import BijectionTask, Dataset, LabeledSample, MemorizationTask, Task

Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # clamp so the point estimate always sits inside the interval despite rounding
    return max(0.0, min(center - half, p)), min(1.0, max(center + half, p))


@dataclass(frozen=True)
class AccuracyEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    trials: int
    successes: int

    @classmethod
    def from_counts(cls, successes: int, trials: int) -> "AccuracyEstimate":
        lo, hi = wilson_interval(successes, trials)
        return cls(successes / trials, lo, hi, trials, successes)

    @property
    def se(self) -> float:
        return math.sqrt(self.p_hat * (1 - self.p_hat) / self.trials)


def _count_trials(fn, trials: int, threads: int | None) -> int:
    """Sum of ``fn(i)`` over trials, evaluated in contiguous chunks."""
    workers = threads if threads is not None else rngmod.get_threads()
    parts = rngmod.chunks(trials, workers * 4)
    return sum(rngmod.parallel_map(lambda r: sum(fn(i) for i in r), parts, workers))


def estimate_accuracy(learner: Learner, task: Task, x0, n: int, trials: int,
                      rng: np.random.Generator, threads: int | None = None) -> AccuracyEstimate:
    """Fraction of (sample n -> train -> classify x0) rounds that return the ML label."""
    if trials < 30:
        raise ValueError("trials must be >= 30")
    seed = rngmod.child_seed(rng)
    y0 = task.ml_label(x0)
    return AccuracyEstimate.from_counts(_count_trials(lambda i: _one_round(learner, task, x0, y0, n, seed, i),
                                                     trials, threads), trials)


def _one_round(learner, task, x0, y0, n, seed, i) -> int:
    g = rngmod.stream(seed, i)
    clf = learner.train(task.sample(n, g))
    return int(clf.classify(x0, g) == y0)


def bijection_accuracy_bound(k: int, n: int) -> float:
    """Upper bound on P[f(x0) = y0] for any equivariant learner on n bijection samples."""
    return 1 - 0.5 * (1 - 1 / k) ** n * (1 - 1 / (k - 1)) ** n


def memorization_accuracy(m: int, k: int, n: int) -> float:
    """Accuracy of the memorising learner on n clean samples (the optimum)."""
    return 1 - (1 - 1 / m) ** n * (1 - 1 / k)


def min_n_bound(task_kind: str, tau: float, k: int, m: int | None = None) -> float:
    """Closed-form lower bound on the clean sample complexity n(tau)."""
    if task_kind == "bijection":
        if not 0.5 < tau < 1:
            raise ValueError("bijection bound needs tau in (1/2, 1)")
        if k < 3:
            raise ValueError("bijection bound needs k >= 3")
        return math.log(2 - 2 * tau) / math.log(1 - 2 / k)
    if task_kind == "memorization":
        if m is None or m < 2:
            raise ValueError("memorization bound needs m >= 2")
        if not 1 / k < tau < 1:
            raise ValueError(f"memorization bound needs tau in (1/k, 1) = ({1 / k:g}, 1)")
        return (math.log(1 - tau) + math.log(1 + 1 / (k - 1))) / math.log(1 - 1 / m)
    raise ValueError(f"no closed-form bound for task kind {task_kind!r}")


def task_bound(task: Task, tau: float) -> float | None:
    try:
        if task.kind == "bijection":
            return min_n_bound("bijection", tau, task.k)
        if task.kind == "memorization":
            return min_n_bound("memorization", tau, task.k, task.m)
    except ValueError:
        return None
    return None


class SearchError(RuntimeError):
    pass


@dataclass
class SampleComplexityResult:
    n_hat: int
    tau: float
    bound_closed_form: float | None
    estimates: dict[int, AccuracyEstimate] = field(default_factory=dict)

    @property
    def slack(self) -> int:
        """Number of evaluated n whose Wilson interval contains tau (statistically undecided)."""
        return sum(e.ci_low <= self.tau <= e.ci_high for e in self.estimates.values())

    @property
    def consistent_with_bound(self) -> bool:
        if self.bound_closed_form is None:
            return True
        return self.n_hat >= math.floor(self.bound_closed_form) - self.slack


def find_min_n(learner: Learner, task: Task, x0, tau: float, trials_per_n: int,
               rng: np.random.Generator, cap: int = 10**6, threads: int | None = None) -> SampleComplexityResult:
    """Smallest n with estimated accuracy >= tau: doubling search then bisection.

    The decision at each n is the point estimate; each n has its own stream,
    so revisiting an n reproduces the same estimate.
    """
    k = task.n_labels
    if not 1 / k < tau < 1:
        raise ValueError(f"tau must lie in (1/{k}, 1)")
    seed = rngmod.child_seed(rng)
    estimates: dict[int, AccuracyEstimate] = {}

    def passes(n: int) -> bool:
        if n not in estimates:
            estimates[n] = estimate_accuracy(learner, task, x0, n, trials_per_n, rngmod.stream(seed, n), threads)
        return estimates[n].p_hat >= tau

    lo, hi = 0, 1
    while not passes(hi):
        lo, hi = hi, hi * 2
        if hi > cap:
            raise SearchError(f"accuracy stayed below tau={tau} up to n={lo} (cap {cap}); "
                              f"last estimate {estimates[lo].p_hat:.4f}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return SampleComplexityResult(hi, tau, task_bound(task, tau), dict(sorted(estimates.items())))


def measure_lethal_dose(learner: Learner, task: Task, x0, attack: AttackTransform, N: int, trials: int,
                        rng: np.random.Generator, threads: int | None = None) -> AttackReport:
    """Post-attack accuracy at x0 and realised attack sizes over independent trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed = rngmod.child_seed(rng)
    y0 = task.ml_label(x0)

    def run(i: int):
        g = rngmod.stream(seed, i)
        clean = task.sample(N, g)
        poisoned = attack.apply(clean, g)
        size = symmetric_distance(clean, poisoned)
        touched = sum(max(0, c - poisoned.multiplicity(s)) for s, c in clean.items())
        hit = learner.train(poisoned).classify(x0, g) == y0
        return size, touched, int(hit)

    workers = threads if threads is not None else rngmod.get_threads()
    parts = rngmod.chunks(trials, workers * 4)
    out = [r for rows in rngmod.parallel_map(lambda rg: [run(i) for i in rg], parts, workers) for r in rows]
    sizes = np.array([o[0] for o in out], dtype=float)
    touched = np.array([o[1] for o in out], dtype=float)
    hits = sum(o[2] for o in out)
    acc = AccuracyEstimate.from_counts(hits, trials)
    return AttackReport(
        attack=attack.name, N=N, trials=trials,
        expected_size=float(attack.expected_size(N, task)),
        expected_touched=float(attack.expected_touched(N, task)),
        realized_mean=float(sizes.mean()), realized_sd=float(sizes.std(ddof=1)) if trials > 1 else 0.0,
        touched_mean=float(touched.mean()),
        post_acc=acc.p_hat, ci_lo=acc.ci_low, ci_hi=acc.ci_high, chance=1.0 / task.n_labels,
    )


def pick_swap_target(learner: Learner, task: Task, x0, N: int, rng: np.random.Generator,
                     pilot: int = 0) -> int:
    """y1 for the label-swap attack: the label the clean learner outputs least often at x0."""
    y0 = task.ml_label(x0)
    if pilot <= 0:
        return choose_swap_target(y0, task.n_labels)
    proba: dict[int, float] = {}
    for _ in range(pilot):
        clf = learner.train(task.sample(N, rng))
        for y, p in clf.predict_proba(x0).items():
            proba[y] = proba.get(y, 0.0) + p / pilot
    return choose_swap_target(y0, task.n_labels, proba)


@dataclass(frozen=True)
class ScalingRow:
    task_params: dict
    n_hat: int
    lethal_expected: float
    lethal_touched: float
    N: int
    bound_closed_form: float | None

    @property
    def product(self) -> float:
        return self.n_hat * self.lethal_expected / self.N


@dataclass
class SweepResult:
    family: str
    tau: float
    rows: list[ScalingRow]

    @property
    def ratio(self) -> float:
        products = [r.product for r in self.rows]
        return max(products) / min(products)


def make_task(family: str, value: int, rng: np.random.Generator, k: int = 5) -> Task:
    if family == "bijection":
        return BijectionTask.random(value, rng)
    if family == "memorization":
        return MemorizationTask.random(value, k, rng)
    raise ValueError(f"scaling sweeps support 'bijection' and 'memorization', not {family!r}")


def scaling_sweep(family: str, grid: Sequence[int], tau: float, N: int, rng: np.random.Generator,
                  trials_per_n: int = 2000, k: int = 5, threads: int | None = None) -> SweepResult:
    """n_hat(tau) times the matched attack's expected size, per grid point, normalised by N."""
    if not grid:
        raise ValueError("grid must be nonempty")
    seed = rngmod.child_seed(rng)
    rows = []
    for i, value in enumerate(grid):
        g = rngmod.stream(seed, i)
        task = make_task(family, value, g, k)
        x0 = 0
        try:
            res = find_min_n(canonical_learner(task), task, x0, tau, trials_per_n, g, threads=threads)
        except (SearchError, ValueError) as exc:
            raise SearchError(f"grid point {family}={value}: {exc}") from exc
        attack = matched_attack(task, x0)
        params = {"k": task.k} if family == "bijection" else {"m": task.m, "k": task.k}
        rows.append(ScalingRow(params, res.n_hat, attack.expected_size(N, task),
                               attack.expected_touched(N, task), N, res.bound_closed_form))
    return SweepResult(family, tau, rows)


@dataclass
class CertifiedCurve:
    k_part: int
    N: int
    certificates: list[Certificate]
    correct: list[bool]
    base_accuracy: float

    @property
    def accuracy(self) -> float:
        return sum(self.correct) / len(self.correct)

    def certified_fraction(self, t: int) -> float:
        ok = sum(c and cert.certified_size >= t for c, cert in zip(self.correct, self.certificates))
        return ok / len(self.correct)

    def table(self, t_max: int | None = None) -> list[tuple[int, float]]:
        if t_max is None:
            t_max = max((c.certified_size for c in self.certificates), default=0) + 1
        return [(t, self.certified_fraction(t)) for t in range(t_max + 1)]

    @property
    def median_certified_size(self) -> float:
        return float(np.median([c.certified_size for c in self.certificates]))


def draw_queries(task: Task, count: int, rng: np.random.Generator) -> list:
    if task.kind == "gaussian":
        return task.sample_inputs(count, rng)
    return [int(x) for x in rng.integers(0, task.n_inputs, size=count)]


def dpa_certified_curve(task: Task, base: Learner, k_part: int, N: int, query_count: int,
                        rng: np.random.Generator, threads: int | None = None) -> CertifiedCurve:
    """Certify fresh queries against one DPA model trained on D ~ P^N."""
    if k_part < 1:
        raise ValueError("k_part must be >= 1")
    seed = rngmod.child_seed(rng)
    D = task.sample(N, rngmod.stream(seed, "train"))
    queries = draw_queries(task, query_count, rngmod.stream(seed, "queries"))
    model: DPAModel = DPALearner(base, k_part, task.n_labels, threads=threads).train(D)
    truth = np.array([task.ml_label(x) for x in queries])
    codes = model.vote_matrix(queries)
    certs = []
    for row in codes:
        profile = profile_from_codes(row, task.n_labels)
        certs.append(dpa_certify(profile, profile.winner()))
    correct = [c.prediction == y for c, y in zip(certs, truth)]
    base_acc = float((codes == truth[:, None]).mean())
    return CertifiedCurve(k_part, N, certs, correct, base_acc)


# ---------------------------------------------------------------------------
# brute-force certificate oracle

MAX_UNIVERSE = 12
MAX_DATASET = 10
MAX_T = 3


@dataclass
class CheckResult:
    ok: bool
    certificate: Certificate
    checked_radius: int
    datasets_checked: int
    counterexample: Dataset | None = None
    counterexample_prediction: int | None = None


def finite_universe(task: Task) -> list[LabeledSample]:
    return [LabeledSample(x, y) for x in range(task.n_inputs) for y in range(task.n_labels)]


def neighbours(D: Dataset, universe: Iterable, radius: int) -> Iterable[tuple[Dataset, int]]:
    """Every D' with |D - D'| <= radius, inserting from ``universe`` and removing from D."""
    support = sorted(set(map(lambda s: LabeledSample(*s), universe)) | set(D.distinct()),
                     key=lambda s: (repr(s.x), s.y))
    base = D.counts()

    def rec(i: int, budget: int, delta: dict):
        if i == len(support):
            yield delta
            return
        s = support[i]
        lo = -min(base.get(s, 0), budget)
        for c in range(lo, budget + 1):
            if c:
                delta[s] = c
            yield from rec(i + 1, budget - abs(c), delta)
            delta.pop(s, None)

    for delta in rec(0, radius, {}):
        counts = dict(base)
        for s, c in delta.items():
            counts[s] = counts.get(s, 0) + c
        yield Dataset(counts), sum(abs(c) for c in delta.values())


def brute_force_certificate_check(universe: Sequence, D: Dataset, plan: PartitionPlan, base: Learner, x0,
                                  t_max: int, n_classes: int | None = None,
                                  certified_size: int | None = None) -> CheckResult:
    """Enumerate all attacks within the certified radius and confirm the vote winner never changes.

    ``certified_size`` overrides the computed certificate, to test the checker
    against a deliberately inflated claim.
    """
    universe = list(universe)
    if len(universe) > MAX_UNIVERSE:
        raise ValueError(f"universe has {len(universe)} samples; limit is {MAX_UNIVERSE}")
    if len(D) > MAX_DATASET:
        raise ValueError(f"dataset has {len(D)} samples; limit is {MAX_DATASET}")
    if not 0 <= t_max <= MAX_T:
        raise ValueError(f"t_max must be in [0, {MAX_T}]")
    dpa = DPALearner(base, plan.k_part, n_classes, plan)
    cert = dpa.train(D).certify(x0)
    claimed = cert.certified_size if certified_size is None else certified_size
    radius = min(claimed, t_max)
    checked = 0
    for D2, _ in neighbours(D, universe, radius):
        checked += 1
        pred = dpa.train(D2).classify(x0)
        if pred != cert.prediction:
            return CheckResult(False, cert, radius, checked, D2, pred)
    return CheckResult(True, cert, radius, checked)
