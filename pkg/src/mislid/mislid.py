"""The identification algorithm: initial design, stopping rule, learner-driven sampling.

Each round checks the stopping statistic
``min over pairs of |mu_t - lam|^2_{D_N} > 2 beta(n)`` on the current estimate
and counts, then asks the learner for weights, computes the closest
alternative under those weights, feeds per-arm gains back to the learner and
pulls an arm drawn from the weights. The estimate is the projection of the
empirical means onto the model set.

All per-round work runs in one compiled kernel (:func:`_advance`); the Python
side only refills random tapes and packages results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator
from sklearn.utils import check_array

from .geometry import AlternativeSolution, ProjectedEstimate, alt_min, lam_from_theta, project_theta
from .learner import ADAHEDGE, FTL, propose_into, update_inplace
from .model import (FeatureMatrix, Instance, ModelSet, RunResult, SufficientStats, TopMQuery,
                    _top_m_sets, is_correct, top_m_answer)
from .numeric import barycentric_spanner, min_eigenvalue, wbar
from .streams import Tapes, seed_record

__all__ = [
    "StoppingConfig",
    "MisLidConfig",
    "GAIN_MODES",
    "init_sequence",
    "stopping_threshold",
    "bonus",
    "gain_vector",
    "AlgorithmState",
    "step",
    "run",
    "MisLid",
]

GAIN_MODES = ("optimistic", "aggressive", "empirical")
_GAIN = {name: code for code, name in enumerate(GAIN_MODES)}
_STOP = {"theoretical": 0, "heuristic": 1}
_LEARN = {"adahedge": ADAHEDGE, "ftl": FTL}

# kernel status codes
RUNNING, STOPPED, CAPPED, NEED_TAPE = 0, 1, 2, 3

# integer state slots
I_N, I_NEXT, I_STATUS, I_INIT, I_MEMLEN, I_CHECKS, I_SINCE_INV = range(7)
# float parameter slots
F_EPS, F_L, F_DELTA, F_GAMMA, F_M = range(5)
# integer config slots
C_M, C_GAIN, C_LEARNER, C_STOP, C_RESTRICT, C_CAP = range(6)


@dataclass(frozen=True)
class StoppingConfig:
    """Threshold family and geometric grid factor (1 checks every round)."""

    mode: str = "theoretical"
    gamma: float = 1.0

    def __post_init__(self):
        if self.mode not in _STOP:
            raise ValueError(f"unknown stopping mode {self.mode!r}")
        if not 1.0 <= self.gamma <= 1.3:
            raise ValueError(f"gamma must lie in [1, 1.3], got {self.gamma}")


@dataclass(frozen=True)
class MisLidConfig:
    gain_mode: str = "optimistic"
    learner: str = "adahedge"
    stopping: StoppingConfig = field(default_factory=StoppingConfig)
    restricted_arms: bool = False
    safety_cap: int = 10_000_000

    def __post_init__(self):
        if self.gain_mode not in _GAIN:
            raise ValueError(f"unknown gain mode {self.gain_mode!r}")
        if self.learner not in _LEARN:
            raise ValueError(f"unknown learner {self.learner!r}")
        if isinstance(self.stopping, dict):
            object.__setattr__(self, "stopping", StoppingConfig(**self.stopping))
        if self.safety_cap < 1:
            raise ValueError("safety_cap must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "MisLidConfig":
        raw = dict(raw)
        algo = raw.pop("algorithm", "mislid")
        if algo != "mislid":
            raise ValueError(f"not a MisLid config: algorithm={algo!r}")
        keep = {k: raw[k] for k in ("gain_mode", "learner", "stopping", "restricted_arms", "safety_cap") if k in raw}
        return cls(**keep)

    def to_dict(self) -> dict:
        return {
            "algorithm": "mislid",
            "gain_mode": self.gain_mode,
            "learner": self.learner,
            "stopping": {"mode": self.stopping.mode, "gamma": self.stopping.gamma},
            "restricted_arms": self.restricted_arms,
            "safety_cap": self.safety_cap,
        }


# --------------------------------------------------------------------------
# thresholds and bonuses
# --------------------------------------------------------------------------


@njit(cache=True)
def beta_uns(t, delta, K):
    # log t is floored at 1: the threshold only grows, and it stays defined for t < e
    lt = max(np.log(t), 1.0)
    x = np.log(2.0 * np.e / delta) / (2.0 * K) + 0.5 * np.log(8.0 * np.e * K * lt)
    return 2.0 * K * wbar(x)


@njit(cache=True)
def beta_lin(t, delta, d, eps):
    ld = np.log(1.0 / delta)
    inner = 1.0 + ld + (1.0 + 1.0 / ld) * (d / 2.0) * np.log(1.0 + t / (2.0 * d) * ld)
    root = 4.0 * np.sqrt(t) * eps + np.sqrt(2.0) * np.sqrt(inner)
    return 0.5 * root * root


@njit(cache=True)
def threshold(t, delta, K, d, eps, mode):
    if mode == 1:
        return np.log((1.0 + np.log(t + 1.0)) / delta)
    return min(beta_uns(t, delta, K), beta_lin(t, delta, d, eps))


@njit(cache=True)
def bonuses_into(A, Vinv, N, n, eps, L, M, out):
    """Squared-error bonuses at ``n`` pulls: min of linear, per-arm and range caps."""
    K, d = A.shape
    ln = np.log(float(n))
    t2 = float(n) * float(n)
    alpha_lin = np.log(5.0) + 4.0 * ln + d * np.log(1.0 + t2 / (2.0 * d))
    # per-arm confidence at time n^2 and level 1/(5 n^6)
    lt = max(2.0 * ln, 1.0)
    x = (np.log(2.0 * np.e) + np.log(5.0) + 6.0 * ln) / (2.0 * K) + 0.5 * np.log(8.0 * np.e * K * lt)
    alpha_uns = 2.0 * K * wbar(x)
    dev = 8.0 * (L * K + 1.0) ** 2 * eps * eps
    cap = 4.0 * M * M
    for k in range(K):
        q = 0.0
        for a in range(d):
            for b in range(d):
                q += A[k, a] * Vinv[a, b] * A[k, b]
        c = min(dev + 4.0 * alpha_lin * q, cap)
        if N[k] > 0.0:
            c = min(c, 2.0 * alpha_uns / N[k])
        out[k] = c


@njit(cache=True)
def gains_into(mu_t, lam, c, mode, out):
    for k in range(mu_t.shape[0]):
        diff = abs(mu_t[k] - lam[k])
        if mode == 0:
            r = diff + np.sqrt(c[k])
            out[k] = r * r
        elif mode == 1:
            out[k] = diff * diff + c[k]
        else:
            out[k] = diff * diff


# --------------------------------------------------------------------------
# the round kernel
# --------------------------------------------------------------------------


@njit(cache=True)
def _split_answer(mu_t, m, ins, outs):
    order = np.argsort(-mu_t, kind="mergesort")
    K = mu_t.shape[0]
    mask = np.zeros(K, dtype=np.bool_)
    for q in range(m):
        mask[order[q]] = True
    a = 0
    b = 0
    for k in range(K):
        if mask[k]:
            ins[a] = k
            a += 1
        else:
            outs[b] = k
            b += 1


@njit(cache=True)
def _reproject(A, N, S, eps, theta, mu_t, y):
    K = A.shape[0]
    for k in range(K):
        y[k] = S[k] / N[k] if N[k] > 0.0 else 0.0
    project_theta(A, N, y, eps, theta)
    s = A @ theta
    for k in range(K):
        if N[k] > 0.0:
            mu_t[k] = min(max(y[k], s[k] - eps), s[k] + eps)
        else:
            mu_t[k] = s[k]


@njit(cache=True)
def _pull(A, mu_env, N, S, V, Vinv, noise, nptr, k, ist):
    x = mu_env[k] + noise[k, nptr[k]]
    nptr[k] += 1
    N[k] += 1.0
    S[k] += x
    d = A.shape[1]
    for a in range(d):
        for b in range(d):
            V[a, b] += A[k, a] * A[k, b]
    ist[I_N] += 1
    if ist[I_INIT] >= 0:
        return
    # Sherman-Morrison, with a periodic exact refresh against drift
    ist[I_SINCE_INV] += 1
    if ist[I_SINCE_INV] >= 1024:
        Vinv[:, :] = np.linalg.inv(V)
        ist[I_SINCE_INV] = 0
        return
    u = Vinv @ A[k]
    den = 1.0 + A[k] @ u
    for a in range(d):
        for b in range(d):
            Vinv[a, b] -= u[a] * u[b] / den


@njit(cache=True)
def stopping_statistic(A, N, mu_t, theta, eps, m, thresh):
    """``(value, i, j)`` of the stopping statistic; with ``thresh >= 0`` it may stop early."""
    K = A.shape[0]
    ins = np.empty(m, dtype=np.int64)
    outs = np.empty(K - m, dtype=np.int64)
    _split_answer(mu_t, m, ins, outs)
    lam = np.empty(K)
    th = theta.copy()
    val, i, j, _ = alt_min(A, N, mu_t, eps, ins, outs, th, False, thresh, lam)
    return val, i, j


@njit(cache=True)
def _advance(A, mu_env, fpar, cfg, init_seq, N, S, V, Vinv, theta, mu_t, G, gap, mem, ist,
             noise, nptr, unif, uptr, answer, max_rounds, trace):
    """Run up to ``max_rounds`` rounds; returns a status code.

    ``trace`` (length >= 2) receives the last stopping statistic and threshold.
    """
    K, d = A.shape
    m = cfg[C_M]
    eps = fpar[F_EPS]
    size = noise.shape[1]
    n_u = unif.shape[0]
    ins = np.empty(m, dtype=np.int64)
    outs = np.empty(K - m, dtype=np.int64)
    w = np.empty(K)
    lam = np.empty(K)
    c = np.zeros(K)
    u_gain = np.empty(K)
    y = np.empty(K)
    th = np.empty(d)
    pool = np.empty(K - m, dtype=np.int64)
    r_outs = np.empty(K - m, dtype=np.int64)
    rounds = 0
    while rounds < max_rounds:
        if ist[I_STATUS] != RUNNING:
            return ist[I_STATUS]
        n = ist[I_N]
        if n >= cfg[C_CAP]:
            ist[I_STATUS] = CAPPED
            _split_answer(mu_t, m, answer, outs)
            return CAPPED
        for k in range(K):
            if nptr[k] >= size:
                return NEED_TAPE
        if uptr[0] + 1 + d > n_u:
            return NEED_TAPE
        # initial design
        if ist[I_INIT] >= 0:
            k = init_seq[ist[I_INIT]]
            _pull(A, mu_env, N, S, V, Vinv, noise, nptr, k, ist)
            ist[I_INIT] += 1
            if ist[I_INIT] >= init_seq.shape[0]:
                ist[I_INIT] = -1
                Vinv[:, :] = np.linalg.inv(V)
                theta[:] = np.linalg.solve(V, A.T @ S)
                _reproject(A, N, S, eps, theta, mu_t, y)
                ist[I_NEXT] = ist[I_N]
            rounds += 1
            continue
        _split_answer(mu_t, m, ins, outs)
        # stopping rule on the current estimate and counts
        if n >= ist[I_NEXT]:
            beta = threshold(float(n), fpar[F_DELTA], K, d, eps, cfg[C_STOP])
            th[:] = theta
            val, bi, bj, _ = alt_min(A, N, mu_t, eps, ins, outs, th, False, 2.0 * beta, lam)
            ist[I_CHECKS] += 1
            trace[0] = val
            trace[1] = 2.0 * beta
            if val > 2.0 * beta:
                ist[I_STATUS] = STOPPED
                answer[:] = ins
                return STOPPED
            nxt = int(np.ceil(fpar[F_GAMMA] * n))
            ist[I_NEXT] = max(n + 1, nxt)
        # learner weights and best response
        propose_into(cfg[C_LEARNER], G, gap[0], w)
        if cfg[C_RESTRICT] == 1:
            # recent argmin outsiders plus d fresh uniform picks among outsiders
            cnt = 0
            for q in range(ist[I_MEMLEN]):
                a = mem[q]
                is_out = False
                for b in range(K - m):
                    if outs[b] == a:
                        is_out = True
                        break
                if is_out:
                    r_outs[cnt] = a
                    cnt += 1
            pool[:] = outs
            for q in range(min(d, K - m)):
                pick = q + int(unif[uptr[0]] * (K - m - q))
                uptr[0] += 1
                pick = min(pick, K - m - 1)
                tmp = pool[q]
                pool[q] = pool[pick]
                pool[pick] = tmp
                a = pool[q]
                dup = False
                for b in range(cnt):
                    if r_outs[b] == a:
                        dup = True
                        break
                if not dup:
                    r_outs[cnt] = a
                    cnt += 1
            sel = np.sort(r_outs[:cnt])
        else:
            sel = outs
        th[:] = theta
        _, bi, bj, _ = alt_min(A, w, mu_t, eps, ins, sel, th, False, -1.0, lam)
        if cfg[C_RESTRICT] == 1:
            # most recent argmin first, no duplicates, at most d entries
            newmem = np.empty(d, dtype=np.int64)
            newmem[0] = bi
            cnt = 1
            for q in range(ist[I_MEMLEN]):
                if cnt >= d:
                    break
                if mem[q] != bi:
                    newmem[cnt] = mem[q]
                    cnt += 1
            mem[:cnt] = newmem[:cnt]
            ist[I_MEMLEN] = cnt
        if cfg[C_GAIN] != 2:
            bonuses_into(A, Vinv, N, n, eps, fpar[F_L], fpar[F_M], c)
        gains_into(mu_t, lam, c, cfg[C_GAIN], u_gain)
        update_inplace(cfg[C_LEARNER], G, gap, w, u_gain)
        # draw the arm from the weights
        u = unif[uptr[0]]
        uptr[0] += 1
        acc = 0.0
        k = -1
        for q in range(K):
            if w[q] > 0.0:
                k = q
                acc += w[q]
                if u < acc:
                    break
        _pull(A, mu_env, N, S, V, Vinv, noise, nptr, k, ist)
        _reproject(A, N, S, eps, theta, mu_t, y)
        rounds += 1
    return RUNNING


# --------------------------------------------------------------------------
# Python API
# --------------------------------------------------------------------------


def init_sequence(features) -> np.ndarray:
    """Round robin over a barycentric spanner, cut at the first prefix with ``V >= 2 L^2 I``."""
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix(features)
    A, L = features.rows, features.L
    spanner = barycentric_spanner(features)
    target = 2.0 * L * L
    V = np.zeros((features.d, features.d))
    seq = []
    # the round-robin length is bounded by d * ceil(target / sigma_min(spanner design))
    sig = min_eigenvalue(A[spanner].T @ A[spanner])
    limit = len(spanner) * int(np.ceil(target / sig)) + len(spanner)
    while len(seq) <= limit:
        for k in spanner:
            seq.append(int(k))
            V += np.outer(A[k], A[k])
            if min_eigenvalue(V) >= target * (1 - 1e-12):
                return np.array(seq, dtype=np.int64)
    raise RuntimeError("initial design did not reach the eigenvalue target")


def stopping_threshold(t, query: TopMQuery, model: ModelSet, mode: str = "theoretical") -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    if mode not in _STOP:
        raise ValueError(f"unknown stopping mode {mode!r}")
    return float(threshold(float(t), query.delta, model.K, model.d, model.epsilon, _STOP[mode]))


def bonus(k: int, stats: SufficientStats, model: ModelSet) -> float:
    """Squared-error bonus of arm ``k`` given the current statistics."""
    out = bonuses(stats, model)
    return float(out[k])


def bonuses(stats: SufficientStats, model: ModelSet) -> np.ndarray:
    Vinv = np.linalg.inv(stats.design)
    out = np.empty(model.K)
    bonuses_into(model.A, Vinv, stats.counts, max(stats.t, 1.0), model.epsilon, model.features.L,
                 model.mean_bound, out)
    return out


def gain_vector(estimate, alt, bonuses_, mode: str = "optimistic") -> np.ndarray:
    """Per-arm gains fed to the learner (the linear coefficients of the round's gain)."""
    if mode not in _GAIN:
        raise ValueError(f"unknown gain mode {mode!r}")
    mu_t = estimate.mu_tilde if isinstance(estimate, ProjectedEstimate) else np.asarray(estimate, float)
    lam = alt.lam if isinstance(alt, AlternativeSolution) else np.asarray(alt, float)
    c = np.asarray(bonuses_, dtype=float)
    if np.any(c < 0):
        raise ValueError("bonuses must be non-negative")
    out = np.empty_like(mu_t)
    gains_into(mu_t, lam, c, _GAIN[mode], out)
    return out


class AlgorithmState:
    """Mutable per-run state; advanced by :func:`step` or :func:`run`."""

    def __init__(self, env: Instance, query: TopMQuery, model: ModelSet, config: MisLidConfig,
                 seed=0, rep: int = 0, alg: int = 0):
        if model.enforce_mean_bound:
            raise NotImplementedError("the sampling loop drops the mean bound; use enforce_mean_bound=False")
        query.validate(model.K)
        if env.K != model.K:
            raise ValueError("instance and model disagree on K")
        K, d = model.K, model.d
        self.env, self.query, self.model, self.config = env, query, model, config
        self.A = np.ascontiguousarray(model.A)
        self.mu_env = np.ascontiguousarray(env.mu, dtype=float)
        self.fpar = np.array([model.epsilon, model.features.L, query.delta, config.stopping.gamma,
                              model.mean_bound])
        self.cfg = np.array([query.m, _GAIN[config.gain_mode], _LEARN[config.learner],
                             _STOP[config.stopping.mode], int(config.restricted_arms), config.safety_cap],
                            dtype=np.int64)
        self.init_seq = init_sequence(model.features)
        self.N = np.zeros(K)
        self.S = np.zeros(K)
        self.V = np.zeros((d, d))
        self.Vinv = np.zeros((d, d))
        self.theta = np.zeros(d)
        self.mu_t = np.zeros(K)
        self.G = np.zeros(K)
        self.gap = np.zeros(1)
        self.mem = np.zeros(d, dtype=np.int64)
        self.ist = np.zeros(7, dtype=np.int64)
        self.answer = np.full(query.m, -1, dtype=np.int64)
        self.trace = np.full(2, np.nan)
        self.tapes = Tapes(K, int(seed), rep, alg)
        self.timings = {"init": 0.0, "sampling": 0.0}

    @property
    def t(self) -> int:
        return int(self.ist[I_N])

    @property
    def phase(self) -> str:
        status = int(self.ist[I_STATUS])
        if status == STOPPED:
            return "stopped"
        if status == CAPPED:
            return "capped"
        return "initializing" if self.ist[I_INIT] >= 0 else "running"

    @property
    def stats(self) -> SufficientStats:
        s = SufficientStats(self.model.features, counts=self.N.copy(), reward_sums=self.S.copy())
        return s

    @property
    def estimate(self) -> ProjectedEstimate:
        s = self.A @ self.theta
        return ProjectedEstimate(self.mu_t.copy(), self.theta.copy(), self.mu_t - s)

    @property
    def learner_gains(self) -> np.ndarray:
        return self.G.copy()

    def advance(self, max_rounds: int) -> int:
        tp = self.tapes
        while True:
            code = _advance(self.A, self.mu_env, self.fpar, self.cfg, self.init_seq, self.N, self.S,
                            self.V, self.Vinv, self.theta, self.mu_t, self.G, self.gap, self.mem,
                            self.ist, tp.noise, tp.nptr, tp.unif, tp.uptr, self.answer, max_rounds,
                            self.trace)
            if code != NEED_TAPE:
                return int(code)
            tp.refill()

    def stopping_value(self) -> float:
        """Exact stopping statistic at the current estimate and counts."""
        val, _, _ = stopping_statistic(self.A, self.N, self.mu_t, self.theta, self.model.epsilon,
                                       self.query.m, -1.0)
        return float(val)


def step(state: AlgorithmState) -> AlgorithmState:
    """One round: an initial pull, or a stopping check followed by one sampled pull."""
    if state.phase in ("stopped", "capped"):
        raise RuntimeError("run already finished")
    state.advance(1)
    return state


def run(env: Instance, query: TopMQuery, model: ModelSet, config: Optional[MisLidConfig] = None,
        seed=0, rep: int = 0, alg: int = 0) -> RunResult:
    config = config or MisLidConfig()
    t_start = time.perf_counter()
    state = AlgorithmState(env, query, model, config, seed, rep, alg)
    t0 = time.perf_counter()
    state.advance(len(state.init_seq))
    t1 = time.perf_counter()
    code = state.advance(np.iinfo(np.int64).max)
    t2 = time.perf_counter()
    return _result(state, code, {"setup": t0 - t_start, "init": t1 - t0, "sampling": t2 - t1},
                   time.perf_counter() - t_start)


def _result(state: AlgorithmState, code: int, timings: dict, wall: float) -> RunResult:
    answer = sorted(int(a) for a in state.answer)
    return RunResult(
        algorithm="mislid",
        tau=state.t,
        answer=answer,
        correct=is_correct(answer, state.env.mu, state.query.m),
        seed=state.tapes.seed,
        incomplete=code != STOPPED,
        wall_time=wall,
        timings=timings,
        extra={"init_length": int(len(state.init_seq)), "stopping_checks": int(state.ist[I_CHECKS]),
               "config": state.config.to_dict()},
    )


class MisLid(BaseEstimator):
    """Estimator wrapper: ``fit(X, env)`` runs one identification on features ``X``.

    ``env`` is the true mean vector (or an :class:`Instance`) the simulator draws
    from. After fitting, ``answer_`` holds the selected arms, ``tau_`` the number
    of pulls and ``result_`` the full :class:`RunResult`.
    """

    def __init__(self, m=1, delta=0.05, epsilon=0.0, mean_bound=1.0, gain_mode="optimistic",
                 learner="adahedge", stopping="theoretical", gamma=1.0, restricted_arms=False,
                 safety_cap=10_000_000, random_state=0):
        self.m = m
        self.delta = delta
        self.epsilon = epsilon
        self.mean_bound = mean_bound
        self.gain_mode = gain_mode
        self.learner = learner
        self.stopping = stopping
        self.gamma = gamma
        self.restricted_arms = restricted_arms
        self.safety_cap = safety_cap
        self.random_state = random_state

    def _config(self) -> MisLidConfig:
        return MisLidConfig(self.gain_mode, self.learner, StoppingConfig(self.stopping, self.gamma),
                            self.restricted_arms, self.safety_cap)

    def fit(self, X, env, rep: int = 0):
        X = check_array(X, dtype=np.float64)
        model = ModelSet(FeatureMatrix(X), self.epsilon, self.mean_bound)
        if not isinstance(env, Instance):
            env = Instance(np.asarray(env, dtype=float))
        seed = self.random_state if self.random_state is not None else 0
        if not isinstance(seed, (int, np.integer)):
            raise ValueError("random_state must be a non-negative integer")
        query = TopMQuery(self.m, self.delta)
        self.result_ = run(env, query, model, self._config(), seed=int(seed), rep=rep)
        self.answer_ = np.array(self.result_.answer)
        self.tau_ = self.result_.tau
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X=None):
        """The selected arms (``X`` is accepted for API symmetry and ignored)."""
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "answer_")
        return self.answer_
