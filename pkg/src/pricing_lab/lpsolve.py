"""Linear programs ``max c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  l <= x <= u``.

Two backends share one result type.  ``simplex`` is a dense-tableau
bounded-variable primal simplex (two phases, bound flipping, Dantzig
pricing with a Bland fallback once degenerate pivots pile up).  ``highs``
hands large sparse programs to SciPy's HiGHS.  Either way the returned
point is re-checked against the original data and a dual bound is built
from the final basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

PIVOT_TOL = 1e-10
COST_TOL = 1e-9
FEAS_TOL = 1e-9
RESIDUAL_TOL = 1e-7
BOUND_TOL = 1e-9
# dense tableau cells above which method="auto" switches to HiGHS
DENSE_LIMIT = 300_000

STATUSES = ("optimal", "infeasible", "unbounded", "iteration-limit")


@dataclass(frozen=True, eq=False)
class LinearProgram:
    c: np.ndarray
    A_ub: object = None
    b_ub: np.ndarray | None = None
    A_eq: object = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        n = c.size
        lower = np.zeros(n) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=np.float64), (n,)).copy()
        upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=np.float64), (n,)).copy()
        if not np.all(np.isfinite(c)):
            raise ValueError("objective coefficients must be finite")
        if not np.all(np.isfinite(lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        A_ub, b_ub = _rows(self.A_ub, self.b_ub, n, "ub")
        A_eq, b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        for k, v in dict(c=c, lower=lower, upper=upper, A_ub=A_ub, b_ub=b_ub,
                         A_eq=A_eq, b_eq=b_eq).items():
            object.__setattr__(self, k, v)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m_ub(self) -> int:
        return self.b_ub.size

    @property
    def m_eq(self) -> int:
        return self.b_eq.size

    def residuals(self, x) -> tuple[float, float]:
        """Worst constraint violation and worst bound violation at ``x``."""
        r = 0.0
        if self.m_ub:
            r = max(r, float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        if self.m_eq:
            r = max(r, float(np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0)))
        bnd = float(max(np.max(self.lower - x, initial=0.0), np.max(x - self.upper, initial=0.0)))
        return r, bnd


def _rows(A, b, n, tag):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    if sp.issparse(A):
        A = sp.csr_matrix(A, dtype=np.float64)
    else:
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.shape != (b.size, n):
        raise ValueError(f"A_{tag} has shape {A.shape}, expected ({b.size}, {n})")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"b_{tag} must be finite")
    return A, b


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    backend: str
    iterations: int = 0
    y_ub: np.ndarray | None = None
    y_eq: np.ndarray | None = None
    dual_bound: float = float("nan")
    residual: float = float("nan")
    bound_residual: float = float("nan")
    notes: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    @property
    def duality_gap(self) -> float:
        return self.dual_bound - self.objective


def solve_lp(lp: LinearProgram, method: str = "auto", max_iter: int | None = None) -> LpSolution:
    """Solve ``lp``; infeasible and unbounded programs come back as statuses."""
    if method == "auto":
        m = lp.m_ub + lp.m_eq
        method = "simplex" if m * (lp.n + lp.m_ub + m) <= DENSE_LIMIT else "highs"
    if method == "simplex":
        return _solve_simplex(lp, max_iter)
    if method == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown LP method {method!r}")


# ---------------------------------------------------------------------------
# dense bounded-variable simplex


def _dense(A):
    return A.toarray() if sp.issparse(A) else A


class _Tableau:
    """Working state of one simplex run (single use)."""

    def __init__(self, T, xB, basis, upper, max_iter, bland_after):
        self.T = T
        self.xB = xB
        self.basis = basis
        self.upper = upper
        self.at_upper = np.zeros(T.shape[1], dtype=bool)
        self.max_iter = max_iter
        self.bland_after = bland_after
        self.degenerate = 0
        self.bland = False
        self.iterations = 0

    def run(self, cost, allowed) -> str:
        T, basis = self.T, self.basis
        d = cost - cost[basis] @ T
        is_basic = np.zeros(T.shape[1], dtype=bool)
        is_basic[basis] = True
        while True:
            if self.iterations >= self.max_iter:
                return "iteration-limit"
            elig = allowed & ~is_basic & (
                (~self.at_upper & (d > COST_TOL)) | (self.at_upper & (d < -COST_TOL))
            )
            if not elig.any():
                return "optimal"
            if self.bland:
                j = int(np.flatnonzero(elig)[0])
            else:
                j = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            step = -1.0 if self.at_upper[j] else 1.0
            col = T[:, j].copy()
            alpha = step * col
            ub_b = self.upper[basis]
            lim = np.full(alpha.shape, np.inf)
            dec = alpha > PIVOT_TOL
            lim[dec] = np.maximum(self.xB[dec], 0.0) / alpha[dec]
            inc = (alpha < -PIVOT_TOL) & np.isfinite(ub_b)
            lim[inc] = np.maximum(ub_b[inc] - self.xB[inc], 0.0) / -alpha[inc]
            t_row = float(lim.min()) if lim.size else np.inf
            flip = float(self.upper[j])
            if not np.isfinite(min(t_row, flip)):
                return "unbounded"
            self.iterations += 1
            if flip <= t_row:
                self.xB -= flip * alpha
                self.at_upper[j] = not self.at_upper[j]
                t = flip
            else:
                t = t_row
                ties = np.flatnonzero(lim <= t_row + 1e-12 * max(1.0, t_row))
                if self.bland:
                    r = int(ties[np.argmin(basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                leaving = int(basis[r])
                to_upper = alpha[r] < 0
                entering_val = t if step > 0 else self.upper[j] - t
                self.xB -= t * alpha
                piv = T[r, j]
                T[r] /= piv
                col[r] = 0.0
                T -= np.outer(col, T[r])
                d -= d[j] * T[r]
                d[j] = 0.0
                self.xB[r] = entering_val
                basis[r] = j
                is_basic[j] = True
                is_basic[leaving] = False
                self.at_upper[leaving] = to_upper
                self.at_upper[j] = False
            if t <= FEAS_TOL:
                self.degenerate += 1
                if self.degenerate >= self.bland_after:
                    self.bland = True


def _solve_simplex(lp: LinearProgram, max_iter: int | None) -> LpSolution:
    n, m_ub, m_eq = lp.n, lp.m_ub, lp.m_eq
    m = m_ub + m_eq
    A = np.vstack([_dense(lp.A_ub), _dense(lp.A_eq)]) if m else np.zeros((0, n))
    b = np.concatenate([lp.b_ub, lp.b_eq]) - A @ lp.lower
    width = lp.upper - lp.lower

    sign = np.where(b < 0, -1.0, 1.0)
    need_art = np.concatenate([b[:m_ub] < 0, np.ones(m_eq, dtype=bool)])
    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.size
    N = n + m_ub + n_art
    M0 = np.zeros((m, N))
    M0[:, :n] = A * sign[:, None]
    M0[np.arange(m_ub), n + np.arange(m_ub)] = sign[:m_ub]
    M0[art_rows, n + m_ub + np.arange(n_art)] = 1.0
    rhs = b * sign

    basis = np.empty(m, dtype=np.int64)
    basis[:m_ub] = n + np.arange(m_ub)
    basis[art_rows] = n + m_ub + np.arange(n_art)
    upper = np.concatenate([width, np.full(m_ub + n_art, np.inf)])

    tab = _Tableau(M0.copy(), rhs.copy(), basis, upper,
                   max_iter or 50 * (m + N) + 1000, 10 * (m + N))
    notes = []
    allowed = np.ones(N, dtype=bool)
    if n_art:
        cost1 = np.zeros(N)
        cost1[n + m_ub:] = -1.0
        status = tab.run(cost1, allowed)
        if status == "iteration-limit":
            return LpSolution(status, None, float("nan"), "simplex", tab.iterations)
        art_basic = tab.basis >= n + m_ub
        infeas = float(np.sum(np.maximum(tab.xB[art_basic], 0.0)))
        if infeas > FEAS_TOL * max(1.0, float(np.abs(rhs).max(initial=0.0))):
            return LpSolution("infeasible", None, float("nan"), "simplex", tab.iterations,
                              notes=(f"phase-one residual {infeas:.3g}",))
        upper[n + m_ub:] = 0.0
        allowed[n + m_ub:] = False
        tab.xB[art_basic] = 0.0

    cost2 = np.zeros(N)
    cost2[:n] = lp.c
    status = tab.run(cost2, allowed)
    if status != "optimal":
        return LpSolution(status, None, float("nan"), "simplex", tab.iterations)

    # values from the final basis, re-solved against the untouched data
    xfull = np.where(tab.at_upper, upper, 0.0)
    xfull[n + m_ub:] = 0.0
    xfull[tab.basis] = tab.xB
    Bmat = M0[:, tab.basis]
    y = None
    if m:
        try:
            nonbasic = np.ones(N, dtype=bool)
            nonbasic[tab.basis] = False
            r = rhs - M0[:, nonbasic] @ xfull[nonbasic]
            refined = np.linalg.solve(Bmat, r)
            if np.all(np.isfinite(refined)):
                xfull[tab.basis] = refined
            y = np.linalg.solve(Bmat.T, cost2[tab.basis])
        except np.linalg.LinAlgError:
            notes.append("singular final basis; refinement skipped")
    x = lp.lower + np.clip(xfull[:n], 0.0, width)
    y_ub = y_eq = None
    dual_bound = float("nan")
    if y is not None:
        y = y * sign
        y_ub, y_eq = y[:m_ub], y[m_ub:]
        dual_bound = _dual_bound(lp, np.maximum(y_ub, 0.0), y_eq)
    res, bres = lp.residuals(x)
    return LpSolution("optimal", x, float(lp.c @ x), "simplex", tab.iterations,
                      y_ub, y_eq, dual_bound, res, bres, tuple(notes))


def _dual_bound(lp: LinearProgram, y_ub, y_eq) -> float:
    """Lagrangian bound ``max_{l<=x<=u} c'x - y'(Ax - b)``; valid for any ``y_ub >= 0``."""
    red = lp.c.copy()
    val = 0.0
    if lp.m_ub:
        red -= lp.A_ub.T @ y_ub
        val += float(y_ub @ lp.b_ub)
    if lp.m_eq:
        red -= lp.A_eq.T @ y_eq
        val += float(y_eq @ lp.b_eq)
    red = np.asarray(red).reshape(-1)
    hi = np.where(red > 0, lp.upper, lp.lower)
    if np.any((red > 1e-12) & ~np.isfinite(lp.upper)):
        return float("inf")
    return val + float(np.sum(np.where(red != 0, red * hi, 0.0)))


# ---------------------------------------------------------------------------
# HiGHS


def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    res = linprog(
        -lp.c,
        A_ub=lp.A_ub if lp.m_ub else None,
        b_ub=lp.b_ub if lp.m_ub else None,
        A_eq=lp.A_eq if lp.m_eq else None,
        b_eq=lp.b_eq if lp.m_eq else None,
        bounds=np.column_stack([lp.lower, lp.upper]),
        method="highs",
    )
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return LpSolution("infeasible", None, float("nan"), "highs", iters)
    if res.status == 3:
        return LpSolution("unbounded", None, float("nan"), "highs", iters)
    if res.status != 0:
        return LpSolution("iteration-limit", None, float("nan"), "highs", iters,
                          notes=(str(res.message),))
    x = np.clip(res.x, lp.lower, lp.upper)
    y_ub = -np.asarray(res.ineqlin.marginals) if lp.m_ub else np.zeros(0)
    y_eq = -np.asarray(res.eqlin.marginals) if lp.m_eq else np.zeros(0)
    dual_bound = _dual_bound(lp, np.maximum(y_ub, 0.0), y_eq)
    r, bres = lp.residuals(x)
    return LpSolution("optimal", x, float(lp.c @ x), "highs", iters,
                      y_ub, y_eq, dual_bound, r, bres)
