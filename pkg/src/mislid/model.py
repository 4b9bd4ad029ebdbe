"""Domain types: features, model sets, instances, queries and sufficient statistics.

Rewards are unit-variance Gaussians, so a bandit instance is fully described by
its mean vector ``mu``. Arms are 0-based everywhere in the code; the JSON files
use the same convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from sklearn.utils import check_array

__all__ = [
    "FeatureMatrix",
    "ModelSet",
    "Instance",
    "TopMQuery",
    "SufficientStats",
    "check_weights",
    "top_m_answer",
    "is_alternative",
    "is_correct",
    "sample_reward",
    "load_problem",
    "dump_problem",
    "RunResult",
]


@dataclass(frozen=True)
class FeatureMatrix:
    """Arm features stacked as rows, shape ``(K, d)``, required to have rank d."""

    rows: np.ndarray

    def __post_init__(self):
        rows = check_array(self.rows, dtype=np.float64, ensure_min_samples=1)
        K, d = rows.shape
        if d > K:
            raise ValueError(f"need d <= K, got K={K}, d={d}")
        if np.linalg.matrix_rank(rows) < d:
            raise ValueError("feature rows do not span R^d")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_L", float(np.max(np.linalg.norm(rows, axis=1))))

    @property
    def K(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    @property
    def L(self) -> float:
        """Largest Euclidean row norm."""
        return self._L

    @classmethod
    def identity(cls, K: int) -> "FeatureMatrix":
        return cls(np.eye(K))


@dataclass(frozen=True)
class ModelSet:
    """Realizable means ``{A theta + eta : |eta|_inf <= epsilon}``.

    The additional bound ``|mu|_inf <= mean_bound`` is only part of membership
    when ``enforce_mean_bound`` is set; the projection and alternative
    computations drop it otherwise.
    """

    features: FeatureMatrix
    epsilon: float = 0.0
    mean_bound: float = 1.0
    enforce_mean_bound: bool = False

    def __post_init__(self):
        if not isinstance(self.features, FeatureMatrix):
            object.__setattr__(self, "features", FeatureMatrix(self.features))
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.mean_bound > 0:
            raise ValueError(f"mean_bound must be > 0, got {self.mean_bound}")
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "mean_bound", float(self.mean_bound))

    @property
    def A(self) -> np.ndarray:
        return self.features.rows

    @property
    def K(self) -> int:
        return self.features.K

    @property
    def d(self) -> int:
        return self.features.d

    def deviation(self, nu) -> float:
        """Smallest ``|nu - A theta|_inf`` over theta (Chebyshev fit, solved as an LP)."""
        nu = np.asarray(nu, dtype=float)
        A = self.A
        K, d = A.shape
        # variables (theta, s); minimise s subject to -s <= nu - A theta <= s
        c = np.zeros(d + 1)
        c[-1] = 1.0
        ones = np.ones((K, 1))
        A_ub = np.vstack([np.hstack([-A, -ones]), np.hstack([A, -ones])])
        b_ub = np.concatenate([-nu, nu])
        bounds = [(None, None)] * d + [(0, None)]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status != 0:
            raise RuntimeError(f"Chebyshev fit failed: {res.message}")
        return float(res.x[-1])

    def contains(self, nu, tol: float = 1e-9) -> bool:
        nu = np.asarray(nu, dtype=float)
        if nu.shape != (self.K,):
            raise ValueError(f"expected a vector of length {self.K}")
        if self.enforce_mean_bound and np.max(np.abs(nu)) > self.mean_bound + tol:
            return False
        return self.deviation(nu) <= self.epsilon + tol

    def with_epsilon(self, epsilon: float) -> "ModelSet":
        return ModelSet(self.features, epsilon, self.mean_bound, self.enforce_mean_bound)


@dataclass(frozen=True)
class Instance:
    """Ground-truth means, optionally with a witness ``mu = A theta + eta``."""

    mu: np.ndarray
    witness_theta: Optional[np.ndarray] = None
    witness_eta: Optional[np.ndarray] = None

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).ravel()
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if (self.witness_theta is None) != (self.witness_eta is None):
            raise ValueError("witness_theta and witness_eta go together")
        if self.witness_theta is not None:
            for name in ("witness_theta", "witness_eta"):
                v = np.array(getattr(self, name), dtype=float).ravel()
                v.setflags(write=False)
                object.__setattr__(self, name, v)
            if self.witness_eta.shape != mu.shape:
                raise ValueError("witness_eta must have one entry per arm")

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    def check_witness(self, model: ModelSet, rtol: float = 1e-12) -> None:
        """Raise if the witness does not reproduce ``mu`` or violates the deviation bound."""
        if self.witness_theta is None:
            return
        recon = model.A @ self.witness_theta + self.witness_eta
        scale = max(1.0, float(np.max(np.abs(self.mu))))
        if np.max(np.abs(recon - self.mu)) > rtol * scale:
            raise ValueError("witness does not reproduce mu")
        if np.max(np.abs(self.witness_eta)) > model.epsilon * (1 + rtol) + rtol:
            raise ValueError("witness eta exceeds epsilon")

    def top_m(self, m: int) -> frozenset:
        return top_m_answer(self.mu, m)


@dataclass(frozen=True)
class TopMQuery:
    m: int
    delta: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    def validate(self, K: int) -> None:
        if not 1 <= self.m < K:
            raise ValueError(f"need 1 <= m < K, got m={self.m}, K={K}")


@dataclass
class SufficientStats:
    """Pull counts, reward sums and the design matrix ``V = sum_k N_k phi_k phi_k^T``.

    Counts are floats so the same container carries fractional learner weights.
    """

    features: FeatureMatrix
    counts: np.ndarray = field(default=None)
    reward_sums: np.ndarray = field(default=None)
    design: np.ndarray = field(default=None)
    t: float = 0.0

    def __post_init__(self):
        K, d = self.features.K, self.features.d
        if self.counts is None:
            self.counts = np.zeros(K)
        if self.reward_sums is None:
            self.reward_sums = np.zeros(K)
        self.counts = np.asarray(self.counts, dtype=float).copy()
        self.reward_sums = np.asarray(self.reward_sums, dtype=float).copy()
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.design is None:
            A = self.features.rows
            self.design = (A * self.counts[:, None]).T @ A
        self.t = float(self.counts.sum())

    @classmethod
    def from_counts(cls, features: FeatureMatrix, counts, reward_sums=None) -> "SufficientStats":
        return cls(features, counts=counts, reward_sums=reward_sums)

    def add(self, arm: int, reward: float, weight: float = 1.0) -> None:
        phi = self.features.rows[arm]
        self.counts[arm] += weight
        self.reward_sums[arm] += reward
        self.design += weight * np.outer(phi, phi)
        self.t += weight

    def empirical_means(self) -> np.ndarray:
        """Empirical means; arms never pulled get ``nan``."""
        out = np.full(self.counts.shape, np.nan)
        pulled = self.counts > 0
        out[pulled] = self.reward_sums[pulled] / self.counts[pulled]
        return out

    def check(self, rtol: float = 1e-10) -> None:
        A = self.features.rows
        V = (A * self.counts[:, None]).T @ A
        scale = max(1.0, float(np.max(np.abs(V))))
        if np.max(np.abs(V - self.design)) > rtol * scale:
            raise AssertionError("design matrix out of sync with counts")
        if abs(self.t - self.counts.sum()) > rtol * max(1.0, self.t):
            raise AssertionError("t out of sync with counts")


@dataclass
class RunResult:
    """Outcome of one identification run; identical schema for every algorithm."""

    algorithm: str
    tau: int
    answer: list
    correct: bool
    seed: dict
    incomplete: bool = False
    wall_time: float = 0.0
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "tau": int(self.tau),
            "answer": [int(a) for a in self.answer],
            "correct": bool(self.correct),
            "seed": dict(self.seed),
            "incomplete": bool(self.incomplete),
            "wall_time": float(self.wall_time),
            "timings": {k: float(v) for k, v in self.timings.items()},
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunResult":
        return cls(**{k: raw[k] for k in raw if k in cls.__dataclass_fields__})


def check_weights(w, atol: float = 1e-12) -> np.ndarray:
    """Validate a point of the simplex and return it as a float array."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("weights must be a vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > atol:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")
    return w


def top_m_answer(nu, m: int) -> frozenset:
    """Indices of the m largest entries of ``nu``; ties go to the lowest index."""
    nu = np.asarray(nu, dtype=float)
    K = nu.shape[0]
    if not 1 <= m < K:
        raise ValueError(f"need 1 <= m < K, got m={m}, K={K}")
    order = np.argsort(-nu, kind="stable")
    return frozenset(int(k) for k in order[:m])


def _top_m_sets(nu, m: int) -> list:
    """Every m-subset of ``{k : nu_k >= m-th largest}``."""
    nu = np.asarray(nu, dtype=float)
    threshold = np.sort(nu)[::-1][m - 1]
    candidates = [k for k in range(len(nu)) if nu[k] >= threshold]
    return [frozenset(c) for c in combinations(candidates, m)]


def is_correct(answer, mu, m: int) -> bool:
    """True iff ``answer`` is one of the top-m sets of ``mu``."""
    return frozenset(int(a) for a in answer) in _top_m_sets(mu, m)


def is_alternative(mu, lam, m: int) -> bool:
    """True iff some arm outside the top-m of ``mu`` strictly beats one inside it under ``lam``."""
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if len(_top_m_sets(mu, m)) != 1:
        raise ValueError("mu has a tie at the m-th position")
    inside = sorted(top_m_answer(mu, m))
    outside = [k for k in range(len(mu)) if k not in inside]
    return bool(np.max(lam[outside]) > np.min(lam[inside]))


def sample_reward(instance: Instance, arm: int, rng: np.random.Generator) -> float:
    return float(instance.mu[arm] + rng.standard_normal())


def dump_problem(path, instance: Instance, model: ModelSet) -> None:
    payload = {
        "K": model.K,
        "d": model.d,
        "features": model.A.tolist(),
        "epsilon": model.epsilon,
        "mean_bound": model.mean_bound,
        "mu": instance.mu.tolist(),
    }
    if instance.witness_theta is not None:
        payload["theta"] = instance.witness_theta.tolist()
        payload["eta"] = instance.witness_eta.tolist()
    Path(path).write_text(json.dumps(payload, indent=2))


def load_problem(path) -> tuple[Instance, ModelSet]:
    raw = json.loads(Path(path).read_text())
    return problem_from_dict(raw)


def problem_from_dict(raw: dict) -> tuple[Instance, ModelSet]:
    features = FeatureMatrix(np.asarray(raw["features"], dtype=float))
    if features.K != raw.get("K", features.K) or features.d != raw.get("d", features.d):
        raise ValueError("K/d disagree with the feature matrix")
    model = ModelSet(
        features,
        epsilon=raw.get("epsilon", 0.0),
        mean_bound=raw.get("mean_bound", 1.0),
        enforce_mean_bound=raw.get("enforce_mean_bound", False),
    )
    instance = Instance(raw["mu"], raw.get("theta"), raw.get("eta"))
    if instance.K != model.K:
        raise ValueError("mu length disagrees with K")
    return instance, model


def pairs_for(answer: Sequence[int], K: int) -> list:
    """Lexicographic ``(i, j)`` pairs with ``i`` outside and ``j`` inside the answer."""
    inside = set(answer)
    return [(i, j) for i in range(K) if i not in inside for j in sorted(inside)]
