"""Small numerical kernels: Lambert W-bar, box QP solver, barycentric spanner, eigenvalues."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

__all__ = [
    "lambert_w_bar",
    "BoxQP",
    "QPResult",
    "solve_box_qp",
    "barycentric_spanner",
    "min_eigenvalue",
    "InfeasibleError",
]


class InfeasibleError(ValueError):
    """The requested feasible set is empty."""


@njit(cache=True)
def wbar(x):
    """Root ``y >= 1`` of ``y - log(y) = x`` for ``x >= 1`` (no domain check)."""
    if x <= 1.0:
        return 1.0
    y = x + np.log(x)
    for _ in range(100):
        f = y - np.log(y) - x
        step = f / (1.0 - 1.0 / y)
        y_new = y - step
        if y_new <= 1.0:
            y_new = 0.5 * (y + 1.0)
        if abs(y_new - y) <= 1e-15 * y_new:
            y = y_new
            break
        y = y_new
    return y


def lambert_w_bar(x: float) -> float:
    """``-W_{-1}(-exp(-x))``: the solution ``y >= 1`` of ``y - ln y = x``.

    Computed by Newton's method from ``x + ln x``, where the function is convex
    and increasing so the iteration converges quadratically.
    """
    x = float(x)
    if not x >= 1.0:
        raise ValueError(f"lambert_w_bar needs x >= 1, got {x}")
    return float(wbar(x))


@dataclass(frozen=True)
class BoxQP:
    """``min 1/2 x'Qx + q'x`` over ``|x_k| <= bound_k`` and optionally ``a'x <= c``."""

    Q: np.ndarray
    q: np.ndarray
    bound: np.ndarray | float = np.inf
    lin_constraint: Optional[tuple] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.asarray(self.q, dtype=float).ravel()
        n = q.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"Q has shape {Q.shape}, expected {(n, n)}")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.T)) > 1e-10 * scale:
            raise ValueError("Q is not symmetric")
        b = np.broadcast_to(np.asarray(self.bound, dtype=float), (n,)).copy()
        if np.any(b < 0) or np.any(np.isnan(b)):
            raise ValueError("box bounds must be >= 0")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "bound", b)
        if self.lin_constraint is not None:
            a, c = self.lin_constraint
            a = np.asarray(a, dtype=float).ravel()
            if a.shape != (n,):
                raise ValueError("constraint normal has the wrong length")
            object.__setattr__(self, "lin_constraint", (a, float(c)))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def value(self, x) -> float:
        return float(0.5 * x @ self.Q @ x + self.q @ x)

    def is_feasible(self) -> bool:
        if self.lin_constraint is None:
            return True
        a, c = self.lin_constraint
        with np.errstate(invalid="ignore"):
            lowest = -np.sum(np.where(a != 0, np.abs(a) * self.bound, 0.0))
        return lowest <= c

    def project(self, z: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the feasible set."""
        b = self.bound
        x = np.clip(z, -b, b)
        if self.lin_constraint is None:
            return x
        a, c = self.lin_constraint
        if a @ x <= c:
            return x
        return _project_box_halfspace(z, b, a, c)


def _project_box_halfspace(z, b, a, c):
    """Project onto ``{|x| <= b, a'x <= c}`` when the box projection violates the half-space.

    The solution is ``clip(z - nu a)`` for the multiplier ``nu > 0`` making the
    constraint tight. ``a'clip(z - nu a)`` is piecewise linear and non-increasing
    in ``nu``, so we locate the segment between sorted breakpoints and solve
    exactly on it.
    """
    nz = a != 0
    with np.errstate(invalid="ignore"):
        bps = np.concatenate([(z[nz] - b[nz]) / a[nz], (z[nz] + b[nz]) / a[nz]])
    bps = np.unique(bps[np.isfinite(bps) & (bps > 0)])

    def g(nu):
        return a @ np.clip(z - nu * a, -b, b) - c

    lo, g_lo = 0.0, g(0.0)
    for hi in bps:
        g_hi = g(hi)
        if g_hi <= 0:
            break
        lo, g_lo = hi, g_hi
    else:
        # past every breakpoint: the free coordinates still move linearly
        free = nz & ~np.isfinite(b)
        slope = -np.sum(a[free] ** 2)
        if slope == 0:
            raise InfeasibleError("box and half-space do not intersect")
        return np.clip(z - (lo - g_lo / slope) * a, -b, b)
    nu = lo + (hi - lo) * g_lo / (g_lo - g_hi)
    return np.clip(z - nu * a, -b, b)


@dataclass(frozen=True)
class QPResult:
    x: np.ndarray
    value: float
    status: str
    iterations: int
    kkt_residual: float


def _kkt_residual(problem: BoxQP, x: np.ndarray) -> float:
    grad = problem.Q @ x + problem.q
    return float(np.max(np.abs(x - problem.project(x - grad)), initial=0.0))


def _polish(problem: BoxQP, x: np.ndarray, tol: float) -> Optional[np.ndarray]:
    """Solve the equality-constrained QP on the active set guessed from ``x``."""
    n = problem.n
    b = problem.bound
    act_tol = max(tol, 1e-9) * 10
    at_bound = np.isfinite(b) & (np.abs(np.abs(x) - b) <= act_tol * np.maximum(1.0, b))
    free = ~at_bound
    fixed = np.where(at_bound, np.sign(x) * b, 0.0)
    Q, q = problem.Q, problem.q
    rows = [Q[np.ix_(free, free)]]
    rhs = [-(q[free] + Q[np.ix_(free, at_bound)] @ fixed[at_bound])]
    lin_active = False
    if problem.lin_constraint is not None:
        a, c = problem.lin_constraint
        slack = c - a @ x
        lin_active = abs(slack) <= act_tol * max(1.0, abs(c), float(np.abs(a) @ np.abs(x)))
    nf = int(free.sum())
    if nf == 0:
        y = fixed
    else:
        if lin_active:
            af = a[free]
            kkt = np.zeros((nf + 1, nf + 1))
            kkt[:nf, :nf] = rows[0]
            kkt[:nf, nf] = af
            kkt[nf, :nf] = af
            r = np.concatenate([rhs[0], [c - a[at_bound] @ fixed[at_bound]]])
            sol = np.linalg.lstsq(kkt, r, rcond=None)[0]
            xf = sol[:nf]
        else:
            xf = np.linalg.lstsq(rows[0], rhs[0], rcond=None)[0]
        y = fixed.copy()
        y[free] = xf
    if not np.all(np.isfinite(y)):
        return None
    return y


def solve_box_qp(problem: BoxQP, tol: float = 1e-10, max_iter: int = 200_000) -> QPResult:
    """Minimise a convex quadratic over a box, optionally cut by one half-space.

    Accelerated projected gradient (FISTA) with adaptive restart, stopped on the
    projected-gradient residual ``|x - P(x - grad)|_inf <= tol``. A final
    active-set polish solves the reduced equality system and is kept when it is
    feasible and no worse. Returns status ``"infeasible"`` with ``x=None`` when
    the feasible set is empty.
    """
    n = problem.n
    if not problem.is_feasible():
        return QPResult(None, np.inf, "infeasible", 0, np.inf)
    evals = np.linalg.eigvalsh(problem.Q) if n else np.zeros(0)
    top = float(evals[-1]) if n else 0.0
    if n and evals[0] < -1e-10 * max(1.0, abs(top)):
        raise np.linalg.LinAlgError(f"Q is not positive semidefinite (min eigenvalue {evals[0]:.3e})")
    step = 1.0 / top if top > 0 else 1.0

    x = problem.project(np.zeros(n))
    y = x.copy()
    t_mom = 1.0
    status = "max_iter"
    it = 0
    res = _kkt_residual(problem, x)
    if res <= tol:
        status = "optimal"
    else:
        for it in range(1, max_iter + 1):
            grad = problem.Q @ y + problem.q
            x_new = problem.project(y - step * grad)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            # gradient-based restart keeps the momentum from overshooting
            if (y - x_new) @ (x_new - x) > 0:
                t_new = 1.0
                y = x_new.copy()
            else:
                y = x_new + ((t_mom - 1.0) / t_new) * (x_new - x)
            x, t_mom = x_new, t_new
            if it % 10 == 0 or it < 10:
                res = _kkt_residual(problem, x)
                if res <= tol:
                    status = "optimal"
                    break
            if top == 0 and np.any(~np.isfinite(x)):
                raise ValueError("unbounded problem")

    cand = _polish(problem, x, tol)
    if cand is not None:
        cand = problem.project(cand)
        res_c = _kkt_residual(problem, cand)
        if problem.value(cand) <= problem.value(x) + 1e-14 * max(1.0, abs(problem.value(x))) and (
            res_c <= max(res, tol)
        ):
            x, res = cand, res_c
            if res <= tol:
                status = "optimal"
    if not np.all(np.isfinite(x)):
        raise ValueError("unbounded problem")
    return QPResult(x, problem.value(x), status, it, res)


def barycentric_spanner(features, tol: float = 1e-12) -> np.ndarray:
    """Indices of d arms over which every feature has coordinates in ``[-1-tol, 1+tol]``.

    Awerbuch-Kleinberg style: greedily fill a basis starting from the identity,
    then keep making the single swap that most increases ``|det|`` until none
    increases it by more than a factor ``1 + tol``. Replacing basis column ``i``
    by ``phi`` multiplies the determinant by ``(X^{-1} phi)_i``, which is what
    the swaps compare. Picking the best swap rather than the first keeps the
    result independent of arm order.
    """
    A = getattr(features, "rows", features)
    A = np.asarray(A, dtype=float)
    K, d = A.shape
    if np.linalg.matrix_rank(A) < d:
        raise np.linalg.LinAlgError("features do not span R^d")
    X = np.eye(d)
    chosen = [-1] * d
    for i in range(d):
        coef = np.linalg.solve(X, A.T)  # column k: coordinates of phi_k
        gains = np.abs(coef[i])
        k = int(np.argmax(gains))
        X[:, i] = A[k]
        chosen[i] = k
    for _ in range(10_000):
        coef = np.linalg.solve(X, A.T)
        gains = np.abs(coef)
        i, k = np.unravel_index(int(np.argmax(gains)), gains.shape)
        if gains[i, k] <= 1.0 + tol:
            break
        X[:, i] = A[k]
        chosen[i] = int(k)
    return np.array(chosen, dtype=int)


def min_eigenvalue(V, rtol: float = 1e-10) -> float:
    V = np.atleast_2d(np.asarray(V, dtype=float))
    scale = max(1.0, float(np.max(np.abs(V))))
    if V.shape[0] != V.shape[1] or np.max(np.abs(V - V.T)) > rtol * scale:
        raise np.linalg.LinAlgError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(0.5 * (V + V.T))[0])
