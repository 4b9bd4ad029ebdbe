"""Projection onto the model set and closest alternatives over half-spaces.

Distances are weighted squared Euclidean, ``sum_k w_k (nu_k - lam_k)^2``, with
no 1/2 factor. The model set is ``{A theta + eta : |eta|_inf <= eps}``.

Fast path (``method="dual"``)
-----------------------------
For weights ``w`` the projection of ``y`` onto the model set is found in
``theta`` space: minimising ``sum_k w_k (|y_k - phi_k'theta| - eps)_+^2`` is a
convex piecewise quadratic, solved by a semismooth Newton method with an exact
line search over its breakpoints. Given ``theta`` the optimal deviation is the
clipped residual.

The half-space ``lam_i >= lam_j`` is handled through its multiplier ``alpha``:
shifting ``y_i = nu_i + alpha / w_i`` and ``y_j = nu_j - alpha / w_j`` turns the
constrained problem into a plain projection, and ``lam_j(alpha) - lam_i(alpha)``
is non-increasing and piecewise linear in ``alpha``. We find its root by
Illinois false position. ``alpha = 0`` is the case where the constraint is
slack.

Reference path (``method="kkt"``)
---------------------------------
The two explicit quadratic programs in the deviation ``eta`` (constraint
inactive, constraint active), each solved with :func:`solve_box_qp`, keeping
the smaller feasible value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.optimize import minimize

from .model import ModelSet, SufficientStats, pairs_for
from .numeric import BoxQP, solve_box_qp

__all__ = [
    "ProjectedEstimate",
    "OrthogonalParam",
    "HalfSpacePair",
    "AlternativeSolution",
    "orthogonal_decompose",
    "project_onto_model",
    "closest_alternative_halfspace",
    "closest_alternative",
    "WEIGHT_FLOOR",
]

CASE_INACTIVE = 0  # constraint slack, alpha = 0
CASE_ACTIVE = 1  # constraint tight, alpha > 0
CASE_NAMES = {CASE_INACTIVE: "boundary-inactive", CASE_ACTIVE: "boundary-active"}

# Relative floor applied to tiny weights so every subproblem is strictly convex.
# Values are always reported with the caller's weights.
WEIGHT_FLOOR = 1e-9


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _excess(r, eps):
    if r > eps:
        return r - eps
    if r < -eps:
        return r + eps
    return 0.0


@njit(cache=True)
def _slope_at(A, w, r, a, eps, s):
    """``sum_k w_k a_k excess(r_k - s a_k)``: minus half the derivative along the ray."""
    tot = 0.0
    for k in range(r.shape[0]):
        tot += w[k] * a[k] * _excess(r[k] - s * a[k], eps)
    return tot


@njit(cache=True)
def _matvec(A, x, out):
    K, d = A.shape
    for k in range(K):
        acc = 0.0
        for c in range(d):
            acc += A[k, c] * x[c]
        out[k] = acc


@njit(cache=True)
def _chol_solve(H, g, p):
    """Solve ``H p = g`` for symmetric positive definite ``H``; ``H`` is overwritten."""
    d = H.shape[0]
    for c in range(d):
        v = H[c, c]
        for q in range(c):
            v -= H[c, q] * H[c, q]
        if v <= 0.0:
            return False
        v = np.sqrt(v)
        H[c, c] = v
        for r in range(c + 1, d):
            u = H[r, c]
            for q in range(c):
                u -= H[r, q] * H[c, q]
            H[r, c] = u / v
    for c in range(d):
        v = g[c]
        for q in range(c):
            v -= H[c, q] * p[q]
        p[c] = v / H[c, c]
    for c in range(d - 1, -1, -1):
        v = p[c]
        for q in range(c + 1, d):
            v -= H[q, c] * p[q]
        p[c] = v / H[c, c]
    return True


@njit(cache=True)
def project_theta(A, w, y, eps, theta, max_iter=60):
    """Minimise ``sum_k w_k (|y_k - phi_k'theta| - eps)_+^2`` in place, starting at ``theta``.

    Returns the number of Newton iterations.
    """
    K, d = A.shape
    r = np.empty(K)
    a = np.empty(K)
    scale = 0.0
    for k in range(K):
        nk = 0.0
        for c in range(d):
            nk += A[k, c] * A[k, c]
        scale += w[k] * (abs(y[k]) + eps + 1.0) * np.sqrt(nk)
    gtol = 1e-14 * scale + 1e-300
    bps = np.empty(2 * K)
    g = np.empty(d)
    H = np.empty((d, d))
    p = np.empty(d)
    act = np.empty(K, dtype=np.bool_)
    kink = np.empty(K, dtype=np.int64)
    it = 0
    for it in range(max_iter):
        _matvec(A, theta, r)
        for k in range(K):
            r[k] = y[k] - r[k]
        g[:] = 0.0
        n_kink = 0
        for k in range(K):
            e = _excess(r[k], eps)
            act[k] = e != 0.0 or eps == 0.0
            if act[k]:
                we = w[k] * e
                for c in range(d):
                    g[c] += we * A[k, c]
            elif abs(r[k]) >= eps - 1e-12 * (abs(y[k]) + eps + 1.0):
                kink[n_kink] = k
                n_kink += 1
        gmax = 0.0
        for c in range(d):
            gmax = max(gmax, abs(g[c]))
        if gmax <= gtol:
            break
        # rows sitting on their kink join the Hessian once the step pushes them
        # outward; without them the line search parks on the kink and zigzags
        solved = False
        for _ in range(n_kink + 1):
            H[:] = 0.0
            for k in range(K):
                if act[k]:
                    wk = w[k]
                    for c in range(d):
                        for c2 in range(d):
                            H[c, c2] += wk * A[k, c] * A[k, c2]
            tr = 0.0
            for c in range(d):
                tr += H[c, c]
            ridge = 1e-13 * tr / d + 1e-300
            for c in range(d):
                H[c, c] += ridge
            solved = _chol_solve(H, g, p)
            if not solved:
                break
            grew = False
            for q in range(n_kink):
                k = kink[q]
                if not act[k]:
                    step_k = 0.0
                    for c in range(d):
                        step_k += A[k, c] * p[c]
                    if r[k] * step_k < 0.0:
                        act[k] = True
                        grew = True
            if not grew:
                break
        if not solved:
            break
        _matvec(A, p, a)
        # exact line search: D(s) = sum w a excess(r - s a) is non-increasing in s
        D0 = _slope_at(A, w, r, a, eps, 0.0)
        if D0 <= 0.0:
            break
        D1 = _slope_at(A, w, r, a, eps, 1.0)
        if abs(D1) <= 1e-13 * D0:
            s_star = 1.0
        else:
            nb = 0
            for k in range(K):
                if a[k] != 0.0:
                    s1 = (r[k] - eps) / a[k]
                    s2 = (r[k] + eps) / a[k]
                    if s1 > 0.0:
                        bps[nb] = s1
                        nb += 1
                    if s2 > 0.0 and s2 != s1:
                        bps[nb] = s2
                        nb += 1
            bs = np.sort(bps[:nb])
            s_prev = 0.0
            D_prev = D0
            s_star = -1.0
            for b in range(nb):
                sb = bs[b]
                if sb <= s_prev:
                    continue
                Db = _slope_at(A, w, r, a, eps, sb)
                if Db <= 0.0:
                    s_star = s_prev + D_prev * (sb - s_prev) / (D_prev - Db)
                    break
                s_prev = sb
                D_prev = Db
            if s_star < 0.0:
                slope = 0.0
                probe = s_prev + 1.0
                for k in range(K):
                    if _excess(r[k] - probe * a[k], eps) != 0.0:
                        slope += w[k] * a[k] * a[k]
                if slope > 0.0:
                    s_star = s_prev + D_prev / slope
                else:
                    s_star = max(s_prev, 1.0)
        moved = 0.0
        for c in range(d):
            theta[c] += s_star * p[c]
            moved = max(moved, abs(s_star * p[c]))
        if moved <= 1e-16 * (1.0 + np.max(np.abs(theta))):
            break
    return it


@njit(cache=True)
def lam_from_theta(A, y, eps, theta, lam):
    s = np.empty(y.shape[0])
    _matvec(A, theta, s)
    for k in range(y.shape[0]):
        lam[k] = min(max(y[k], s[k] - eps), s[k] + eps)


@njit(cache=True)
def weighted_sq(w, nu, lam):
    tot = 0.0
    for k in range(nu.shape[0]):
        diff = nu[k] - lam[k]
        tot += w[k] * diff * diff
    return tot


@njit(cache=True)
def floored(w):
    wmax = 0.0
    for k in range(w.shape[0]):
        wmax = max(wmax, w[k])
    floor = 1e-9 * wmax
    out = np.empty_like(w)
    for k in range(w.shape[0]):
        out[k] = max(w[k], floor)
    return out


@njit(cache=True)
def _h_at(A, w_eff, nu, eps, i, j, alpha, theta, y, lam):
    for k in range(nu.shape[0]):
        y[k] = nu[k]
    y[i] = nu[i] + alpha / w_eff[i]
    y[j] = nu[j] - alpha / w_eff[j]
    project_theta(A, w_eff, y, eps, theta)
    lam_from_theta(A, y, eps, theta, lam)
    return lam[j] - lam[i]


@njit(cache=True)
def alt_pair(A, w, w_eff, nu, eps, i, j, theta_ref, lam0, unstructured, lam_out):
    """Closest point of ``{lam in M : lam_i >= lam_j}`` to ``nu`` under weights ``w_eff``.

    ``theta_ref``/``lam0`` describe the unconstrained projection of ``nu``.
    Writes the minimiser into ``lam_out`` and returns ``(value, alpha, case)``
    where the value uses the caller's weights ``w``.
    """
    K = nu.shape[0]
    h0 = lam0[j] - lam0[i]
    if h0 <= 0.0:
        lam_out[:] = lam0
        return weighted_sq(w, nu, lam_out), 0.0, 0
    wi = w_eff[i]
    wj = w_eff[j]
    # unstructured candidate: both arms meet at their weighted mean
    if nu[j] > nu[i]:
        mbar = (wi * nu[i] + wj * nu[j]) / (wi + wj)
        alpha_u = (nu[j] - nu[i]) * wi * wj / (wi + wj)
        ok = True
        if not unstructured:
            s = np.empty(K)
            _matvec(A, theta_ref, s)
            for k in range(K):
                v = mbar if (k == i or k == j) else nu[k]
                if abs(v - s[k]) > eps * (1.0 + 1e-12) + 1e-14 * (1.0 + abs(v)):
                    ok = False
                    break
        if ok:
            lam_out[:] = nu
            lam_out[i] = mbar
            lam_out[j] = mbar
            return weighted_sq(w, nu, lam_out), alpha_u, 1
    if unstructured:
        # nu is outside the reach of a pure box-free model only when nu_i >= nu_j
        lam_out[:] = nu
        return 0.0, 0.0, 0
    theta = theta_ref.copy()
    y = np.empty(K)
    lam_b = np.empty(K)
    lam_a = np.empty(K)
    alpha0 = h0 * wi * wj / (wi + wj)
    a_lo = 0.0
    f_lo = h0
    b = alpha0
    fb = _h_at(A, w_eff, nu, eps, i, j, b, theta, y, lam_b)
    # bracket the root: h is piecewise linear, so secant extrapolation is exact
    # on the last piece; growing by at least 25% keeps the search geometric
    n_grow = 0
    while fb > 0.0 and n_grow < 200:
        if f_lo > fb:
            root = b + fb * (b - a_lo) / (f_lo - fb)
            nb = max(root * (1.0 + 1e-12), 1.25 * b)
        else:
            nb = 2.0 * b
        a_lo = b
        f_lo = fb
        b = nb
        fb = _h_at(A, w_eff, nu, eps, i, j, b, theta, y, lam_b)
        n_grow += 1
    if fb > 0.0:
        # no multiplier enforces the order: the half-space misses the model set
        lam_out[:] = lam_b
        return np.inf, np.inf, 1
    lam_out[:] = lam_b
    htol = 1e-11 * (abs(nu[i]) + abs(nu[j]) + eps + 1.0)
    side = 0
    for _ in range(200):
        if -fb <= htol or (b - a_lo) <= 1e-15 * b:
            break
        c = (a_lo * fb - b * f_lo) / (fb - f_lo)
        if not (c > a_lo and c < b):
            c = 0.5 * (a_lo + b)
        fc = _h_at(A, w_eff, nu, eps, i, j, c, theta, y, lam_a)
        if fc <= 0.0:
            b = c
            fb = fc
            lam_out[:] = lam_a
            if side == -1:
                f_lo *= 0.5
            side = -1
        else:
            a_lo = c
            f_lo = fc
            if side == 1:
                fb *= 0.5
            side = 1
    return weighted_sq(w, nu, lam_out), b, 1


@njit(cache=True)
def _alt_pair_linear(A, w, Vinv, nu, i, j, lam0, lam_out):
    """Exact half-space solution when the deviation budget is zero.

    The projection is then linear in the multiplier, so the root is explicit:
    ``alpha = h0 / s`` with ``s`` the ``Vinv``-norm of ``phi_i - phi_j``.
    """
    K, d = A.shape
    h0 = lam0[j] - lam0[i]
    if h0 <= 0.0:
        lam_out[:] = lam0
        return weighted_sq(w, nu, lam_out), 0.0, 0
    delta = np.empty(d)
    for c in range(d):
        delta[c] = A[i, c] - A[j, c]
    step = np.empty(d)
    snorm = 0.0
    for c in range(d):
        acc = 0.0
        for c2 in range(d):
            acc += Vinv[c, c2] * delta[c2]
        step[c] = acc
        snorm += delta[c] * acc
    if snorm <= 0.0:
        lam_out[:] = lam0
        return np.inf, np.inf, 1
    alpha = h0 / snorm
    for k in range(K):
        acc = 0.0
        for c in range(d):
            acc += A[k, c] * step[c]
        lam_out[k] = lam0[k] + alpha * acc
    return weighted_sq(w, nu, lam_out), alpha, 1


@njit(cache=True)
def alt_min(A, w, nu, eps, ins, outs, theta_ref, unstructured, threshold, lam_best):
    """Minimum over pairs ``(i in outs, j in ins)`` of the half-space distances.

    ``threshold < 0`` asks for the exact minimiser. Otherwise the search stops
    as soon as some pair is at most ``threshold`` and pairs whose lower bound
    already exceeds it are never solved; the returned value is then only
    meaningful through the comparison with ``threshold``.

    ``theta_ref`` is updated in place to the projection of ``nu``.
    Returns ``(value, i, j, case)``.
    """
    K = nu.shape[0]
    w_eff = floored(w)
    lam0 = np.empty(K)
    if unstructured:
        lam0[:] = nu
        dist0 = 0.0
    else:
        project_theta(A, w_eff, nu, eps, theta_ref)
        lam_from_theta(A, nu, eps, theta_ref, lam0)
        dist0 = weighted_sq(w, nu, lam0)
    linear = eps == 0.0 and not unstructured
    Vinv = np.empty((0, 0))
    if linear:
        d = A.shape[1]
        V = np.zeros((d, d))
        for k in range(K):
            for c in range(d):
                for c2 in range(d):
                    V[c, c2] += w_eff[k] * A[k, c] * A[k, c2]
        Vinv = np.linalg.inv(V)
    n_in = ins.shape[0]
    n_out = outs.shape[0]
    n_pairs = n_in * n_out
    lbs = np.empty(n_pairs)
    pi = np.empty(n_pairs, dtype=np.int64)
    pj = np.empty(n_pairs, dtype=np.int64)
    idx = 0
    for a in range(n_out):
        for b in range(n_in):
            i = outs[a]
            j = ins[b]
            gap = nu[j] - nu[i]
            lb = 0.0
            if gap > 0.0 and w[i] + w[j] > 0.0:
                lb = w[i] * w[j] / (w[i] + w[j]) * gap * gap
            pi[idx] = i
            pj[idx] = j
            lbs[idx] = max(lb, dist0)
            idx += 1
    order = np.argsort(lbs, kind="mergesort")
    best = np.inf
    best_i = -1
    best_j = -1
    best_case = 0
    lam = np.empty(K)
    for q in range(n_pairs):
        p = order[q]
        lb = lbs[p]
        if threshold >= 0.0:
            if lb > threshold:
                break
        elif lb > best * (1.0 + 1e-12):
            break
        i = pi[p]
        j = pj[p]
        if linear:
            val, alpha, case = _alt_pair_linear(A, w, Vinv, nu, i, j, lam0, lam)
        else:
            val, alpha, case = alt_pair(A, w, w_eff, nu, eps, i, j, theta_ref, lam0, unstructured, lam)
        better = val < best * (1.0 - 1e-12) - 1e-300
        tie = (not better) and val <= best * (1.0 + 1e-12) and (i < best_i or (i == best_i and j < best_j))
        if better or tie:
            best = val
            best_i = i
            best_j = j
            best_case = case
            lam_best[:] = lam
        if threshold >= 0.0 and best <= threshold:
            break
    return best, best_i, best_j, best_case


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectedEstimate:
    mu_tilde: np.ndarray
    theta_tilde: np.ndarray
    eta_tilde: np.ndarray


@dataclass(frozen=True)
class OrthogonalParam:
    """``mu = A theta_t + eta_t`` with ``eta_t`` orthogonal to the features under ``D_N``."""

    theta_t: np.ndarray
    eta_t: np.ndarray

    @staticmethod
    def projector(A, counts):
        """``(P_N, R_N)`` with ``P_N = D^{1/2} A V^{-1} A' D^{1/2}`` and ``R_N = I - P_N``."""
        root = np.sqrt(np.asarray(counts, dtype=float))
        B = A * root[:, None]
        V = B.T @ B
        P = B @ np.linalg.solve(V, B.T)
        return P, np.eye(A.shape[0]) - P


@dataclass(frozen=True)
class HalfSpacePair:
    """Alternative region ``lam_i >= lam_j``: arm ``i`` outside the answer overtakes ``j`` inside."""

    i: int
    j: int

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("pair needs two distinct arms")


@dataclass(frozen=True)
class AlternativeSolution:
    lam: np.ndarray
    value: float
    pair: HalfSpacePair
    kkt_case: str


def _design(A, w):
    return (A * w[:, None]).T @ A


def _check_invertible(V, what="design matrix"):
    ev = np.linalg.eigvalsh(V)
    if ev[0] <= 1e-12 * max(1.0, ev[-1]):
        raise np.linalg.LinAlgError(f"{what} is singular")


def orthogonal_decompose(mu, stats: SufficientStats) -> OrthogonalParam:
    """Split ``mu`` into its ``D_N``-weighted least-squares fit and residual."""
    A = stats.features.rows
    mu = np.asarray(mu, dtype=float)
    _check_invertible(stats.design)
    theta = np.linalg.solve(stats.design, A.T @ (stats.counts * mu))
    return OrthogonalParam(theta, mu - A @ theta)


def _least_squares(A, w, y):
    return np.linalg.solve(_design(A, w), A.T @ (w * y))


def project_onto_model(mu_hat, stats: SufficientStats, model: ModelSet) -> ProjectedEstimate:
    """Closest model to ``mu_hat`` in the ``D_N`` norm.

    Unpulled arms carry no weight; their entry is the linear prediction. With
    the mean bound enforced the joint problem goes through SLSQP instead.
    """
    A = model.A
    w = np.asarray(stats.counts, dtype=float)
    _check_invertible(stats.design)
    y = np.where(w > 0, np.nan_to_num(np.asarray(mu_hat, dtype=float)), 0.0)
    theta = _least_squares(A, w, y)
    if model.enforce_mean_bound:
        theta, eta = _joint_solve(A, w, y, model, None)
        mu_t = A @ theta + eta
        return ProjectedEstimate(mu_t, theta, eta)
    project_theta(A, w, y, model.epsilon, theta)
    s = A @ theta
    eta = np.where(w > 0, np.clip(y - s, -model.epsilon, model.epsilon), 0.0)
    return ProjectedEstimate(s + eta, theta, eta)


def _joint_solve(A, w, nu, model: ModelSet, pair):
    """Joint ``(theta, eta)`` problem with the mean bound, solved by SLSQP."""
    K, d = A.shape
    eps, M = model.epsilon, model.mean_bound

    def split(z):
        return z[:d], z[d:]

    def f(z):
        th, et = split(z)
        r = nu - A @ th - et
        return float(w @ r**2)

    def grad(z):
        th, et = split(z)
        r = nu - A @ th - et
        g = -2 * w * r
        return np.concatenate([A.T @ g, g])

    full = np.hstack([A, np.eye(K)])
    cons = [
        {"type": "ineq", "fun": lambda z: M - full @ z, "jac": lambda z: -full},
        {"type": "ineq", "fun": lambda z: M + full @ z, "jac": lambda z: full},
    ]
    if pair is not None:
        row = full[pair.i] - full[pair.j]
        cons.append({"type": "ineq", "fun": lambda z: row @ z, "jac": lambda z: row})
    bounds = [(None, None)] * d + [(-eps, eps)] * K
    th0 = np.linalg.lstsq(A * np.sqrt(w + 1e-12)[:, None], np.sqrt(w + 1e-12) * nu, rcond=None)[0]
    z0 = np.concatenate([th0, np.zeros(K)])
    res = minimize(f, z0, jac=grad, bounds=bounds, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 2000})
    if not res.success:
        raise RuntimeError(f"mean-bounded projection failed: {res.message}")
    return split(res.x)


def _halfspace_kkt(nu, w, pair: HalfSpacePair, model: ModelSet, tol: float):
    """Two explicit quadratic programs in ``eta``; the smaller feasible value wins."""
    A = model.A
    K = A.shape[0]
    D = np.diag(w)
    V = _design(A, w)
    _check_invertible(V, "weighted design matrix")
    Vinv = np.linalg.inv(V)
    G = A @ Vinv @ A.T  # K x K
    Q = D - D @ G @ D
    Q = 0.5 * (Q + Q.T)
    u = np.zeros(K)
    u[pair.j] = 1.0
    u[pair.i] = -1.0
    b = u - D @ G @ u
    kappa = u @ G @ D @ nu
    eps = model.epsilon
    best = None

    def finish(eta, case):
        theta = Vinv @ A.T @ D @ (nu - eta)
        if case == CASE_ACTIVE:
            alpha = (u @ G @ D @ (nu - eta) + u @ eta) / (u @ G @ u)
            theta = Vinv @ A.T @ (-alpha * u + D @ (nu - eta))
        lam = A @ theta + eta
        return lam, float(w @ (nu - lam) ** 2)

    # constraint slack: plain projection, subject to staying in the half-space
    qp = BoxQP(2 * Q, -2 * Q @ nu, eps, (b, -kappa))
    res = solve_box_qp(qp, tol=tol)
    if res.status != "infeasible":
        lam, val = finish(res.x, CASE_INACTIVE)
        best = (lam, val, CASE_INACTIVE)
    s = u @ G @ u
    if s > 1e-14:
        Q2 = Q + np.outer(b, b) / s
        q2 = (kappa / s) * b - Q @ nu
        res = solve_box_qp(BoxQP(2 * Q2, 2 * q2, eps), tol=tol)
        lam, val = finish(res.x, CASE_ACTIVE)
        if best is None or val < best[1]:
            best = (lam, val, CASE_ACTIVE)
    if best is None:
        raise ValueError("both KKT cases are infeasible")
    return best


def _prepare(nu, w, model: ModelSet):
    nu = np.asarray(nu, dtype=float)
    w = np.asarray(w, dtype=float)
    if nu.shape != (model.K,) or w.shape != (model.K,):
        raise ValueError(f"nu and w need length {model.K}")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(nu)):
        raise ValueError("weights must be finite and non-negative; nu finite")
    return nu, w


def _is_identity(A) -> bool:
    return A.shape[0] == A.shape[1] and np.array_equal(A, np.eye(A.shape[0]))


def closest_alternative_halfspace(nu, w, pair: HalfSpacePair, model: ModelSet,
                                  method: str = "dual", tol: float = 1e-12) -> AlternativeSolution:
    """Closest model in ``{lam : lam_i >= lam_j}`` to ``nu`` under ``D_w``."""
    nu, w = _prepare(nu, w, model)
    if not isinstance(pair, HalfSpacePair):
        pair = HalfSpacePair(*pair)
    A = model.A
    if model.enforce_mean_bound:
        theta, eta = _joint_solve(A, w, nu, model, pair)
        lam = A @ theta + eta
        lam0 = project_onto_model(nu, SufficientStats(model.features, w), model).mu_tilde
        case = CASE_INACTIVE if lam0[pair.i] >= lam0[pair.j] else CASE_ACTIVE
        return AlternativeSolution(lam, float(w @ (nu - lam) ** 2), pair, CASE_NAMES[case])
    if method == "kkt":
        lam, val, case = _halfspace_kkt(nu, w, pair, model, tol)
        return AlternativeSolution(lam, val, pair, CASE_NAMES[case])
    if method != "dual":
        raise ValueError(f"unknown method {method!r}")
    _check_invertible(_design(A, w), "weighted design matrix")
    lam = np.empty(model.K)
    theta = _least_squares(A, w, nu)
    val, _, _, case = alt_min(A, w, nu, model.epsilon, np.array([pair.j]), np.array([pair.i]),
                              theta, _is_identity(A), -1.0, lam)
    return AlternativeSolution(lam, float(val), pair, CASE_NAMES[case])


def closest_alternative(nu, w, answer: Sequence[int], model: ModelSet,
                        method: str = "dual", arms: Optional[Sequence[int]] = None) -> AlternativeSolution:
    """Minimum over pairs ``(i outside answer, j inside)``; ties go to the lexicographically first pair.

    ``arms`` optionally restricts the outside arms that are considered.
    """
    nu, w = _prepare(nu, w, model)
    answer = sorted(int(a) for a in answer)
    K = model.K
    if not 1 <= len(answer) < K or len(set(answer)) != len(answer):
        raise ValueError("answer must hold between 1 and K-1 distinct arms")
    outs = [k for k in range(K) if k not in answer]
    if arms is not None:
        outs = [k for k in outs if k in set(arms)]
    if method == "dual" and not model.enforce_mean_bound:
        A = model.A
        _check_invertible(_design(A, w), "weighted design matrix")
        lam = np.empty(K)
        theta = _least_squares(A, w, nu)
        val, i, j, case = alt_min(A, w, nu, model.epsilon, np.array(answer, dtype=np.int64),
                                  np.array(outs, dtype=np.int64), theta, _is_identity(A), -1.0, lam)
        return AlternativeSolution(lam, float(val), HalfSpacePair(int(i), int(j)), CASE_NAMES[case])
    best = None
    for i, j in pairs_for(answer, K):
        if i not in outs:
            continue
        sol = closest_alternative_halfspace(nu, w, HalfSpacePair(i, j), model, method=method)
        if best is None or sol.value < best.value * (1 - 1e-12):
            best = sol
    return best
