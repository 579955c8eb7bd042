"""Total variation distance and TV-maximal couplings.

Two distribution families are supported: finite distributions over
``{0, ..., K-1}`` and unit-covariance Gaussians.  The coupling sampler draws
``u ~ U``, keeps ``v = u`` with probability ``min(1, q(u)/p(u))`` and otherwise
draws ``v`` from the normalised residual ``(q - min(p, q)) / delta`` by
rejection from ``V``.  Retained samples are the same object as ``u``, so a
match is exact equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence, Union

import numpy as np

MAX_RESIDUAL_ITERATIONS = 10**6


class CouplingError(RuntimeError):
    pass


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class FiniteDistribution:
    probs: tuple[float, ...]

    def __init__(self, probs: Sequence[float]):
        p = tuple(float(v) for v in probs)
        if not p:
            raise ValueError("empty distribution")
        if any(v < 0 or not math.isfinite(v) for v in p):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return len(self.probs)

    def pdf(self, u: int) -> float:
        return self.probs[u]

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if size is None:
            return int(rng.choice(len(self.probs), p=self.probs))
        return rng.choice(len(self.probs), p=self.probs, size=size)


@dataclass(frozen=True)
class GaussianDistribution:
    """N(mean, I)."""

    mean: tuple[float, ...]

    def __init__(self, mean):
        object.__setattr__(self, "mean", tuple(float(v) for v in np.atleast_1d(mean)))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def log_pdf(self, x) -> float:
        diff = np.asarray(x, dtype=float) - np.asarray(self.mean)
        return -0.5 * float(diff @ diff) - 0.5 * self.dim * math.log(2 * math.pi)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        mean = np.asarray(self.mean)
        if size is None:
            return mean + rng.standard_normal(self.dim)
        return mean + rng.standard_normal((size, self.dim))


Distribution = Union[FiniteDistribution, GaussianDistribution]


@dataclass(frozen=True)
class CoupledPair:
    u: Any
    v: Any
    matched: bool


def tv_finite(U: FiniteDistribution | Sequence[float], V: FiniteDistribution | Sequence[float]) -> float:
    p = U.probs if isinstance(U, FiniteDistribution) else tuple(U)
    q = V.probs if isinstance(V, FiniteDistribution) else tuple(V)
    if len(p) != len(q):
        raise ValueError(f"support sizes differ: {len(p)} vs {len(q)}")
    return 0.5 * math.fsum(abs(a - b) for a, b in zip(p, q))


def tv_gaussian_same_cov(mu, mu2) -> float:
    """TV between N(mu, I) and N(mu2, I): P[|Z| <= ||mu - mu2|| / 2]."""
    a = np.atleast_1d(np.asarray(mu, dtype=float))
    b = np.atleast_1d(np.asarray(mu2, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    r = float(np.linalg.norm(a - b)) / 2.0
    # erf(r / sqrt 2) == 2 Phi(r) - 1, without the cancellation near r = 0
    return math.erf(r / math.sqrt(2.0))


def tv(U: Distribution, V: Distribution) -> float:
    _check_pair(U, V)
    if isinstance(U, FiniteDistribution):
        return tv_finite(U, V)
    return tv_gaussian_same_cov(U.mean, V.mean)


def _check_pair(U, V) -> None:
    if isinstance(U, FiniteDistribution) and isinstance(V, FiniteDistribution):
        if len(U) != len(V):
            raise ValueError(f"support sizes differ: {len(U)} vs {len(V)}")
        return
    if isinstance(U, GaussianDistribution) and isinstance(V, GaussianDistribution):
        if U.dim != V.dim:
            raise ValueError(f"dimension mismatch: {U.dim} vs {V.dim}")
        return
    raise TypeError(f"unsupported distribution pair {type(U).__name__}/{type(V).__name__}")


def _ratio_fn(U, V) -> Callable[[Any], float]:
    """x -> q(x) / p(x), with p(x) = 0 mapped to +inf."""
    if isinstance(U, FiniteDistribution):
        def ratio(x):
            p, q = U.probs[x], V.probs[x]
            return math.inf if p == 0 else q / p
    else:
        mu, mu2 = np.asarray(U.mean), np.asarray(V.mean)

        def ratio(x):
            x = np.asarray(x, dtype=float)
            a, b = x - mu, x - mu2
            return math.exp(min(0.5 * float(a @ a) - 0.5 * float(b @ b), 700.0))
    return ratio


def coupled_draw(U: Distribution, V: Distribution, u, rng: np.random.Generator) -> tuple[Any, bool]:
    """Draw v ~ W(v | u) for the maximal coupling W of (U, V)."""
    ratio = _ratio_fn(U, V)
    if rng.random() < min(1.0, ratio(u)):
        return u, True
    for _ in range(MAX_RESIDUAL_ITERATIONS):
        v = V.sample(rng)
        r = ratio(v)
        # accept v with probability max(0, 1 - p(v)/q(v))
        if r > 0 and rng.random() < max(0.0, 1.0 - 1.0 / r):
            return v, False
    raise CouplingError(f"residual sampling did not terminate in {MAX_RESIDUAL_ITERATIONS} iterations")


def maximal_coupling_sample(U: Distribution, V: Distribution, rng: np.random.Generator) -> CoupledPair:
    _check_pair(U, V)
    u = U.sample(rng)
    v, matched = coupled_draw(U, V, u, rng)
    return CoupledPair(u, v, matched)


def coupled_dataset_transform(U: Distribution, V: Distribution, inputs: Sequence, rng: np.random.Generator):
    """Map each u_i (drawn from U) to v_i ~ W(v | u_i) independently.

    Returns ``(outputs, changed)`` where ``changed`` counts the elements that
    were replaced.  Gaussian inputs are processed as a batch.
    """
    _check_pair(U, V)
    if isinstance(U, GaussianDistribution):
        X = np.asarray(inputs, dtype=float).reshape(len(inputs), U.dim)
        out, keep = gaussian_coupled_batch(U, V, X, rng)
        outputs = [inputs[i] if keep[i] else tuple(out[i].tolist()) for i in range(len(inputs))]
        return outputs, int((~keep).sum())
    outputs, changed = [], 0
    for u in inputs:
        v, matched = coupled_draw(U, V, u, rng)
        outputs.append(v)
        changed += not matched
    return outputs, changed


def gaussian_coupled_batch(U: GaussianDistribution, V: GaussianDistribution, X: np.ndarray,
                           rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised conditional coupling for N(mu, I) -> N(mu2, I).

    Returns the new points and a boolean mask of rows kept unchanged.
    """
    mu, mu2 = np.asarray(U.mean), np.asarray(V.mean)
    n = X.shape[0]

    def log_ratio(Y):
        return 0.5 * np.sum((Y - mu) ** 2, axis=1) - 0.5 * np.sum((Y - mu2) ** 2, axis=1)

    keep = np.log(rng.random(n)) < np.minimum(0.0, log_ratio(X))
    out = X.copy()
    pending = np.flatnonzero(~keep)
    for _ in range(MAX_RESIDUAL_ITERATIONS):
        if pending.size == 0:
            return out, keep
        cand = mu2 + rng.standard_normal((pending.size, mu2.size))
        # accept with probability 1 - p/q = 1 - exp(-log_ratio)
        accept = rng.random(pending.size) < -np.expm1(-np.maximum(log_ratio(cand), 0.0))
        out[pending[accept]] = cand[accept]
        pending = pending[~accept]
    raise CouplingError(f"residual sampling did not terminate in {MAX_RESIDUAL_ITERATIONS} iterations")


@dataclass(frozen=True)
class AdvantageEstimate:
    advantage: float
    se: float
    mean_u: float
    mean_v: float
    trials: int

    @property
    def ci(self) -> tuple[float, float]:
        return self.advantage - 1.96 * self.se, self.advantage + 1.96 * self.se


def discrimination_advantage(detector: Callable[[list], int], U: Distribution, V: Distribution,
                             n: int, trials: int, rng: np.random.Generator) -> AdvantageEstimate:
    """Monte Carlo E_{U^n}[detector] - E_{V^n}[detector] from independent draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits_u = sum(int(detector([U.sample(rng) for _ in range(n)])) for _ in range(trials))
    hits_v = sum(int(detector([V.sample(rng) for _ in range(n)])) for _ in range(trials))
    pu, pv = hits_u / trials, hits_v / trials
    se = math.sqrt((pu * (1 - pu) + pv * (1 - pv)) / trials)
    return AdvantageEstimate(pu - pv, se, pu, pv, trials)
