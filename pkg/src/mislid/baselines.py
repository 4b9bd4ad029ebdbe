"""Comparison algorithms: LUCB (no structure) and a Top-m LinGapE (linear, no deviation).

Both draw rewards from the same per-arm noise tapes as :func:`mislid.mislid.run`,
so runs sharing ``(seed, rep)`` see identical reward sequences, and both return
the same :class:`~mislid.model.RunResult` schema.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .mislid import StoppingConfig
from .model import Instance, ModelSet, RunResult, TopMQuery, is_correct, top_m_answer
from .streams import Tapes

__all__ = ["BaselineConfig", "lucb_run", "lingape_run", "run_baseline"]

ALGORITHMS = ("lucb", "lingape")
_RUNNING, _STOPPED, _CAPPED, _NEED_TAPE = 0, 1, 2, 3


@dataclass(frozen=True)
class BaselineConfig:
    """``pac_epsilon`` is the slack allowed between the critical pair's bounds (0 = exact).

    The default exploration rate is the heuristic ``ln((1 + ln(t + 1)) / delta)``,
    the same one given to MisLid in comparisons.
    """

    algorithm: str = "lucb"
    stopping: StoppingConfig = field(default_factory=lambda: StoppingConfig("heuristic"))
    pac_epsilon: float = 0.0
    safety_cap: int = 10_000_000
    regularization: float = 1.0
    theta_norm_bound: Optional[float] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown baseline {self.algorithm!r}")
        if isinstance(self.stopping, dict):
            object.__setattr__(self, "stopping", StoppingConfig(**self.stopping))
        if not self.pac_epsilon >= 0:
            raise ValueError("pac_epsilon must be non-negative")
        if self.safety_cap < 1:
            raise ValueError("safety_cap must be positive")
        if self.regularization <= 0:
            raise ValueError("regularization must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "BaselineConfig":
        keep = ("algorithm", "stopping", "pac_epsilon", "safety_cap", "regularization", "theta_norm_bound")
        return cls(**{k: raw[k] for k in keep if k in raw})

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "stopping": {"mode": self.stopping.mode, "gamma": self.stopping.gamma},
            "pac_epsilon": self.pac_epsilon,
            "safety_cap": self.safety_cap,
            "regularization": self.regularization,
            "theta_norm_bound": self.theta_norm_bound,
        }


@njit(cache=True)
def _rate(t, delta, K, mode):
    if mode == 1:
        return np.log((1.0 + np.log(t + 1.0)) / delta)
    # union bound over arms and rounds
    return np.log(5.0 * K * float(t) ** 4 / (4.0 * delta))


@njit(cache=True)
def _draw(mu, noise, nptr, N, S, k):
    N[k] += 1.0
    S[k] += mu[k] + noise[k, nptr[k]]
    nptr[k] += 1


@njit(cache=True)
def _empirical_top(means, m, inside):
    order = np.argsort(-means, kind="mergesort")
    inside[:] = False
    for q in range(m):
        inside[order[q]] = True


@njit(cache=True)
def _lucb_advance(mu, m, delta, mode, pac, cap, N, S, noise, nptr, ist, answer):
    """ist = [pulls, status]; returns the status code."""
    K = mu.shape[0]
    size = noise.shape[1]
    means = np.empty(K)
    inside = np.zeros(K, dtype=np.bool_)
    while True:
        for k in range(K):
            if nptr[k] + 2 > size:
                return _NEED_TAPE
        t = ist[0]
        if t < K:
            _draw(mu, noise, nptr, N, S, t)
            ist[0] += 1
            continue
        for k in range(K):
            means[k] = S[k] / N[k]
        _empirical_top(means, m, inside)
        beta = _rate(t, delta, K, mode)
        low_k = -1
        low = np.inf
        high_k = -1
        high = -np.inf
        for k in range(K):
            r = np.sqrt(2.0 * beta / N[k])
            if inside[k]:
                if means[k] - r < low:
                    low = means[k] - r
                    low_k = k
            elif means[k] + r > high:
                high = means[k] + r
                high_k = k
        if high - low <= pac or high_k < 0:
            a = 0
            for k in range(K):
                if inside[k]:
                    answer[a] = k
                    a += 1
            return _STOPPED
        if t + 2 > cap:
            return _CAPPED
        _draw(mu, noise, nptr, N, S, low_k)
        _draw(mu, noise, nptr, N, S, high_k)
        ist[0] += 2


@njit(cache=True)
def _lingape_advance(A, mu, m, delta, mode, pac, cap, reg, snorm, N, S, Vinv, b, noise, nptr, ist, answer):
    K, d = A.shape
    size = noise.shape[1]
    theta = np.empty(d)
    means = np.empty(K)
    inside = np.zeros(K, dtype=np.bool_)
    y = np.empty(d)
    Vy = np.empty(d)
    while True:
        for k in range(K):
            if nptr[k] + 1 > size:
                return _NEED_TAPE
        t = ist[0]
        if t < K:
            k_pull = t
        else:
            theta[:] = Vinv @ b
            for k in range(K):
                means[k] = A[k] @ theta
            _empirical_top(means, m, inside)
            if mode == 1:
                width = np.sqrt(2.0 * np.log((1.0 + np.log(t + 1.0)) / delta))
            else:
                # self-normalised confidence radius for ridge regression
                width = np.sqrt(2.0 * np.log(1.0 / delta) + d * np.log(1.0 + t / (reg * d))) \
                    + np.sqrt(reg) * snorm
            best = -np.inf
            bi = -1
            bj = -1
            for i in range(K):
                if inside[i]:
                    continue
                for j in range(K):
                    if not inside[j]:
                        continue
                    for c in range(d):
                        y[c] = A[i, c] - A[j, c]
                    norm = np.sqrt(max(y @ (Vinv @ y), 0.0))
                    idx = means[i] - means[j] + width * norm
                    if idx > best:
                        best = idx
                        bi = i
                        bj = j
            if best <= pac:
                a = 0
                for k in range(K):
                    if inside[k]:
                        answer[a] = k
                        a += 1
                return _STOPPED
            if t + 1 > cap:
                return _CAPPED
            # greedy design: the arm shrinking ||phi_i - phi_j|| in the V^-1 norm the most
            for c in range(d):
                y[c] = A[bi, c] - A[bj, c]
            Vy[:] = Vinv @ y
            k_pull = 0
            top = -1.0
            for k in range(K):
                num = A[k] @ Vy
                den = 1.0 + A[k] @ (Vinv @ A[k])
                score = num * num / den
                if score > top:
                    top = score
                    k_pull = k
        x = mu[k_pull] + noise[k_pull, nptr[k_pull]]
        nptr[k_pull] += 1
        N[k_pull] += 1.0
        S[k_pull] += x
        for c in range(d):
            b[c] += x * A[k_pull, c]
        u = Vinv @ A[k_pull]
        den = 1.0 + A[k_pull] @ u
        for c in range(d):
            for c2 in range(d):
                Vinv[c, c2] -= u[c] * u[c2] / den
        ist[0] += 1


def _drive(step, tapes: Tapes) -> int:
    while True:
        code = step()
        if code != _NEED_TAPE:
            return code
        tapes.refill()


def _finish(name, env, query, config, tapes, ist, code, answer, wall, N, S):
    if code == _STOPPED:
        ans = sorted(int(a) for a in answer)
    else:
        # capped: report the empirical top-m, flagged incomplete
        means = np.divide(S, N, out=np.full_like(S, -np.inf), where=N > 0)
        ans = sorted(top_m_answer(means, query.m))
    return RunResult(
        algorithm=name,
        tau=int(ist[0]),
        answer=ans,
        correct=is_correct(ans, env.mu, query.m),
        seed=tapes.seed,
        incomplete=code != _STOPPED,
        wall_time=wall,
        timings={"sampling": wall},
        extra={"config": config.to_dict(), "pulls": N.astype(int).tolist()},
    )


def _seed_parts(seed, rep, alg):
    return int(seed), int(rep), int(alg)


def lucb_run(env: Instance, query: TopMQuery, config: Optional[BaselineConfig] = None,
             seed=0, rep: int = 0, alg: int = 0) -> RunResult:
    config = config or BaselineConfig()
    K = env.K
    query.validate(K)
    t0 = time.perf_counter()
    tapes = Tapes(K, *_seed_parts(seed, rep, alg))
    N = np.zeros(K)
    S = np.zeros(K)
    ist = np.zeros(2, dtype=np.int64)
    answer = np.zeros(query.m, dtype=np.int64)
    mode = 1 if config.stopping.mode == "heuristic" else 0
    mu = np.ascontiguousarray(env.mu, dtype=float)
    code = _drive(lambda: _lucb_advance(mu, query.m, query.delta, mode, config.pac_epsilon,
                                        config.safety_cap, N, S, tapes.noise, tapes.nptr, ist, answer), tapes)
    return _finish("lucb", env, query, config, tapes, ist, code, answer, time.perf_counter() - t0, N, S)


def lingape_run(env: Instance, query: TopMQuery, model: ModelSet, config: Optional[BaselineConfig] = None,
                seed=0, rep: int = 0, alg: int = 0) -> RunResult:
    """Top-m LinGapE: fits a purely linear model and ignores ``model.epsilon``."""
    config = config or BaselineConfig("lingape")
    A = np.ascontiguousarray(model.A, dtype=float)
    K, d = A.shape
    if env.K != K:
        raise ValueError("instance and features disagree on K")
    query.validate(K)
    t0 = time.perf_counter()
    tapes = Tapes(K, *_seed_parts(seed, rep, alg))
    N = np.zeros(K)
    S = np.zeros(K)
    Vinv = np.eye(d) / config.regularization
    b = np.zeros(d)
    ist = np.zeros(2, dtype=np.int64)
    answer = np.zeros(query.m, dtype=np.int64)
    mode = 1 if config.stopping.mode == "heuristic" else 0
    snorm = config.theta_norm_bound if config.theta_norm_bound is not None else float(np.sqrt(d))
    mu = np.ascontiguousarray(env.mu, dtype=float)
    code = _drive(lambda: _lingape_advance(A, mu, query.m, query.delta, mode, config.pac_epsilon,
                                           config.safety_cap, config.regularization, snorm, N, S, Vinv, b,
                                           tapes.noise, tapes.nptr, ist, answer), tapes)
    return _finish("lingape", env, query, config, tapes, ist, code, answer, time.perf_counter() - t0, N, S)


def run_baseline(env, query, model, config: BaselineConfig, seed=0, rep=0, alg=0) -> RunResult:
    if config.algorithm == "lucb":
        return lucb_run(env, query, config, seed, rep, alg)
    return lingape_run(env, query, model, config, seed, rep, alg)
