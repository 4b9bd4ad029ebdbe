"""Online learners on the simplex, in gain (maximisation) form.

AdaHedge plays exponential weights with learning rate ``ln K / Delta`` where
``Delta`` accumulates the mixability gaps; FTL puts all mass on the current
leader. The kernels are compiled so the sampling loop can call them directly;
:class:`LearnerState` wraps them for Python callers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = ["LearnerState", "regret", "adahedge_regret_bound", "ADAHEDGE", "FTL"]

ADAHEDGE = 0
FTL = 1
_KINDS = {"adahedge": ADAHEDGE, "ftl": FTL}


@njit(cache=True)
def propose_into(kind, gains, gap, out):
    K = gains.shape[0]
    gmax = gains[0]
    for k in range(1, K):
        gmax = max(gmax, gains[k])
    out[:] = 0.0
    if kind == FTL:
        for k in range(K):
            if gains[k] == gmax:
                out[k] = 1.0
                return
    if gap <= 0.0:
        # infinite learning rate: uniform over the leaders
        n = 0
        for k in range(K):
            if gains[k] == gmax:
                n += 1
        for k in range(K):
            if gains[k] == gmax:
                out[k] = 1.0 / n
        return
    eta = np.log(K) / gap
    tot = 0.0
    for k in range(K):
        out[k] = np.exp(eta * (gains[k] - gmax))
        tot += out[k]
    for k in range(K):
        out[k] /= tot


@njit(cache=True)
def mixability_gap(gains, gap, weights, u):
    """Increment of the AdaHedge gap for gain vector ``u`` played against ``weights``."""
    K = u.shape[0]
    expected = 0.0
    for k in range(K):
        expected += weights[k] * u[k]
    if gap <= 0.0:
        best = -np.inf
        for k in range(K):
            if weights[k] > 0.0:
                best = max(best, u[k])
        return max(best - expected, 0.0)
    eta = np.log(K) / gap
    umax = -np.inf
    for k in range(K):
        if weights[k] > 0.0:
            umax = max(umax, u[k])
    acc = 0.0
    for k in range(K):
        if weights[k] > 0.0:
            acc += weights[k] * np.exp(eta * (u[k] - umax))
    mix = umax + np.log(acc) / eta
    return max(mix - expected, 0.0)


@njit(cache=True)
def update_inplace(kind, gains, gap_arr, weights, u):
    """Add ``u`` to the cumulative gains; ``gap_arr[0]`` holds the AdaHedge gap."""
    if kind == ADAHEDGE:
        gap_arr[0] += mixability_gap(gains, gap_arr[0], weights, u)
    for k in range(u.shape[0]):
        gains[k] += u[k]


@dataclass
class LearnerState:
    """Cumulative gains, AdaHedge's accumulated mixability gap and the round count."""

    K: int
    kind: str = "adahedge"
    cumulative_gains: np.ndarray = field(default=None)
    cumulative_mixability_gap: float = 0.0
    t: int = 0
    played: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown learner {self.kind!r}; expected one of {sorted(_KINDS)}")
        if self.K < 1:
            raise ValueError("need at least one arm")
        if self.cumulative_gains is None:
            self.cumulative_gains = np.zeros(self.K)

    def propose(self) -> np.ndarray:
        out = np.empty(self.K)
        propose_into(_KINDS[self.kind], self.cumulative_gains, self.cumulative_mixability_gap, out)
        return out

    def update(self, gain_vector) -> "LearnerState":
        u = np.asarray(gain_vector, dtype=float)
        if u.shape != (self.K,):
            raise ValueError(f"gain vector must have length {self.K}")
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("non-finite gain")
        w = self.propose()
        gap = np.array([self.cumulative_mixability_gap])
        update_inplace(_KINDS[self.kind], self.cumulative_gains, gap, w, u)
        self.cumulative_mixability_gap = float(gap[0])
        self.played.append(w)
        self.t += 1
        return self


def regret(state: LearnerState, gains_history) -> float:
    """Best fixed arm's cumulative gain minus the gain the learner collected."""
    G = np.asarray(gains_history, dtype=float).reshape(-1, state.K)
    if G.shape[0] != state.t or len(state.played) != state.t:
        raise ValueError("history length does not match the number of updates")
    W = np.asarray(state.played).reshape(-1, state.K)
    return float(G.sum(axis=0).max() - np.einsum("tk,tk->", W, G))


def adahedge_regret_bound(t: int, K: int, spread: float) -> float:
    """``2 s sqrt(t ln K) + 16 s (2 + ln K / 3)`` for per-round gain spread ``s``."""
    lk = np.log(K)
    return float(2 * spread * np.sqrt(t * lk) + 16 * spread * (2 + lk / 3))
