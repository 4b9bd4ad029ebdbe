"""Characteristic value of an instance and the matching sample-complexity floor.

The value is ``sup_w F(w)`` with
``F(w) = min over pairs of inf_lam 1/2 sum_k w_k (mu_k - lam_k)^2``
(half the squared distance, i.e. the Gaussian KL). ``F`` is concave and the
best response ``lam*`` at ``w`` gives the supergradient ``(mu - lam*)^2 / 2``,
so every evaluation yields a cut ``F(v) <= v . g`` valid for all ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .geometry import _is_identity, alt_min, closest_alternative
from .learner import ADAHEDGE, propose_into, update_inplace
from .model import FeatureMatrix, Instance, ModelSet, _top_m_sets, top_m_answer

__all__ = [
    "SaddleResult",
    "characteristic_value",
    "unstructured_characteristic_value",
    "sample_complexity_floor",
    "best_response_value",
]


@dataclass(frozen=True)
class SaddleResult:
    h_mu: float
    omega_star: np.ndarray
    gap: float
    iterations: int
    converged: bool = True
    upper: float = np.nan

    def to_dict(self) -> dict:
        return {
            "h_mu": self.h_mu,
            "omega_star": self.omega_star.tolist(),
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
        }


class _Oracle:
    """Evaluates ``F`` and its supergradient for a fixed instance and model."""

    def __init__(self, mu, model: ModelSet, m: int):
        self.mu = np.asarray(mu, dtype=float)
        self.model = model
        if len(_top_m_sets(self.mu, m)) != 1:
            raise ValueError("the m-th and (m+1)-th means are tied")
        self.answer = sorted(top_m_answer(self.mu, m))
        K = model.K
        self.ins = np.array(self.answer, dtype=np.int64)
        self.outs = np.array([k for k in range(K) if k not in self.answer], dtype=np.int64)
        self.unstructured = _is_identity(model.A)
        self.theta = np.zeros(model.d)
        self.lam = np.empty(K)
        self.calls = 0

    def __call__(self, w):
        self.calls += 1
        w = np.asarray(w, dtype=float)
        if self.model.enforce_mean_bound:
            sol = closest_alternative(self.mu, w, self.answer, self.model)
            lam, val = sol.lam, sol.value
        else:
            val, _, _, _ = alt_min(self.model.A, w, self.mu, self.model.epsilon, self.ins, self.outs,
                                   self.theta, self.unstructured, -1.0, self.lam)
            lam = self.lam
        return 0.5 * val, 0.5 * (self.mu - lam) ** 2


def best_response_value(instance, model: ModelSet, m: int, w) -> float:
    """``F(w)``: half the squared distance from the instance to its alternative set."""
    mu = instance.mu if isinstance(instance, Instance) else instance
    return _Oracle(mu, model, m)(w)[0]


def _cut_lp(cuts, K):
    """``max z`` s.t. ``z <= g . w`` for every cut, ``w`` in the simplex."""
    G = np.asarray(cuts)
    n = G.shape[0]
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-G, np.ones((n, 1))])
    A_eq = np.concatenate([np.ones(K), [0.0]])[None, :]
    bounds = [(0, None)] * K + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"cutting-plane LP failed: {res.message}")
    w = np.clip(res.x[:K], 0, None)
    return w / w.sum(), float(res.x[-1])


def characteristic_value(instance, model: ModelSet, m: int, tol: float = 1e-6,
                         max_iter: int = 2000, method: str = "cutting-plane") -> SaddleResult:
    """``sup_w F(w)`` with a certified gap.

    ``method="cutting-plane"`` (default) runs Kelley's method: the LP over all
    cuts gives an upper bound, the best evaluated ``F`` a lower bound.
    ``method="adahedge"`` instead plays AdaHedge against exact best responses
    and bounds the value from above by the best averaged gain.
    The returned ``h_mu`` is the lower end, attained at ``omega_star``.
    """
    mu = instance.mu if isinstance(instance, Instance) else np.asarray(instance, dtype=float)
    K = model.K
    if np.ptp(mu) == 0:
        return SaddleResult(0.0, np.full(K, 1.0 / K), 0.0, 0, True, 0.0)
    oracle = _Oracle(mu, model, m)
    if method == "cutting-plane":
        return _kelley(oracle, K, tol, max_iter)
    if method == "adahedge":
        return _hedge(oracle, K, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def _kelley(oracle, K, tol, max_iter):
    w = np.full(K, 1.0 / K)
    cuts = []
    lower, w_best = -np.inf, w
    upper = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        val, g = oracle(w)
        if val > lower:
            lower, w_best = val, w
        cuts.append(g)
        w, upper = _cut_lp(cuts, K)
        if upper - lower <= tol:
            break
    gap = max(upper - lower, 0.0)
    return SaddleResult(lower, w_best, gap, it, gap <= tol, upper)


def _hedge(oracle, K, tol, max_iter):
    gains = np.zeros(K)
    gap_arr = np.zeros(1)
    w = np.empty(K)
    w_sum = np.zeros(K)
    lower, w_best, upper = -np.inf, np.full(K, 1.0 / K), np.inf
    it = 0
    for it in range(1, max_iter + 1):
        propose_into(ADAHEDGE, gains, gap_arr[0], w)
        _, g = oracle(w)
        update_inplace(ADAHEDGE, gains, gap_arr, w, g)
        w_sum += w
        # F(v) <= v . g_s for every s, so the averaged gains bound the value
        upper = min(upper, float(gains.max()) / it)
        if it % 50 == 0 or it == max_iter:
            avg = w_sum / it
            val, _ = oracle(avg)
            if val > lower:
                lower, w_best = val, avg
            if upper - lower <= tol:
                break
    gap = max(upper - lower, 0.0)
    return SaddleResult(lower, w_best, gap, it, gap <= tol, upper)


def unstructured_characteristic_value(instance, m: int, tol: float = 1e-6, max_iter: int = 2000,
                                      method: str = "cutting-plane") -> SaddleResult:
    """Characteristic value when every mean vector is allowed (identity features)."""
    mu = instance.mu if isinstance(instance, Instance) else np.asarray(instance, dtype=float)
    model = ModelSet(FeatureMatrix.identity(mu.shape[0]), epsilon=0.0)
    return characteristic_value(mu, model, m, tol, max_iter, method)


def sample_complexity_floor(h_mu: float, delta: float) -> float:
    """``log(1 / (2.4 delta)) / h_mu``; infinite when ``h_mu`` is zero."""
    if not 0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 1/2], got {delta}")
    if h_mu < 0:
        raise ValueError("h_mu must be non-negative")
    if h_mu == 0:
        return np.inf
    return float(np.log(1.0 / (2.4 * delta)) / h_mu)
