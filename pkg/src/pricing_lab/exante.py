"""Single-agent ex ante optimal payoff curves and closeness reports.

``A(q)`` is the best payoff of an incentive compatible mechanism selling
with ex ante probability exactly ``q``.  Three solvers:

* ``two-menu``: public budget, exact program over posted-price mixtures
  read back as a small menu;
* ``lp-relaxed``: private budget LP that drops the conditional upward
  budget constraints, an upper bound on ``A(q)``;
* ``brute-force``: tiny instances, full conditional IC by enumerating which
  budget levels can afford each type's payment.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .curves import (
    ConcaveCurve,
    PayoffCurve,
    concave_hull,
    price_posting_curve,
    write_curve_csv,
)
from .dist import DEFAULT_GRID, Agent, DiscreteDist, ParameterError
from .lpsolve import LinearProgram, LpSolution, solve_lp
from .parallel import pmap

TOL = 1e-9


class InfeasibleQuantileError(ValueError):
    pass


class SizeError(ValueError):
    pass


class DegenerateDistributionError(ValueError):
    pass


class NumericalError(RuntimeError):
    """An LP expected to be feasible came back otherwise."""


def _check_q(q: float) -> None:
    if not (-TOL <= q <= 1 + TOL):
        raise InfeasibleQuantileError(f"quantile {q} outside [0, 1]")


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class ExAnteCurve:
    objective: str
    q: np.ndarray
    values: np.ndarray
    solver: str

    @property
    def upper_bound(self) -> bool:
        return self.solver == "lp-relaxed"

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def argmax(self) -> float:
        return float(self.q[int(np.argmax(self.values))])

    def at(self, q):
        return np.interp(q, self.q, self.values)

    def hull(self) -> ConcaveCurve:
        return concave_hull(PayoffCurve(self.objective, self.q, self.values))

    def to_csv(self, path) -> Path:
        return write_curve_csv(path, self.q, self.values)


@dataclass(frozen=True)
class MenuMechanism:
    """Options ``(x, p)`` besides the implicit null option ``(0, 0)``."""

    options: tuple = ()

    def __post_init__(self):
        opts = tuple(sorted((float(x), float(p)) for x, p in self.options))
        prev_x, prev_p, prev_slope = 0.0, 0.0, -math.inf
        for x, p in opts:
            if not (0 <= x <= 1 + TOL) or p < -TOL:
                raise ValueError(f"bad menu option {(x, p)}")
            if p < prev_p - TOL:
                raise ValueError("payments must be nondecreasing in allocation")
            if x > prev_x + TOL:
                slope = (p - prev_p) / (x - prev_x)
                if slope < prev_slope - 1e-7:
                    raise ValueError("per-unit marginal price must be nondecreasing")
                prev_slope = slope
            prev_x, prev_p = x, p
        object.__setattr__(self, "options", opts)

    def choose(self, v: float, b: float = math.inf) -> tuple[float, float]:
        """Utility-maximizing affordable option; ties go to the larger allocation."""
        best = (0.0, 0.0)
        best_u = 0.0
        for x, p in self.options:
            if p > b + TOL:
                continue
            u = v * x - p
            if u > best_u + 1e-12 or (u >= best_u - 1e-12 and x > best[0]):
                best, best_u = (x, p), max(u, best_u)
        return best


@dataclass(frozen=True, eq=False)
class AllocationPaymentFunction:
    """Convex nondecreasing payment schedule ``tau_b`` on ``[0, x[-1]]``."""

    budget: float
    x: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        t = np.asarray(self.tau, dtype=np.float64)
        if x.size == 0 or x[0] != 0 or abs(t[0]) > TOL:
            raise ValueError("tau must start at (0, 0)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("allocation grid must be strictly increasing")
        slopes = np.diff(t) / np.diff(x)
        if np.any(slopes < -1e-9):
            raise ValueError("tau must be nondecreasing")
        if np.any(np.diff(slopes) < -1e-7 * np.maximum(1.0, np.abs(slopes[1:]))):
            raise ValueError("tau must be convex")
        if t[-1] > self.budget + 1e-7:
            raise ValueError("tau exceeds the budget where offered")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "tau", t)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.tau) / np.diff(self.x)

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    def __call__(self, x):
        return np.interp(x, self.x, self.tau)

    def argmax_slope_below(self, price: float) -> float:
        """``max{x : tau'(x) <= price}`` using left derivatives."""
        s = self.slopes
        ok = np.flatnonzero(s <= price + 1e-12)
        if ok.size == 0:
            return 0.0
        # convexity makes the admissible segments a prefix
        return float(self.x[ok[-1] + 1])

    def choose(self, v, budget: float | None = None):
        """Allocation and payment chosen by values ``v`` with budget ``budget``.

        Buys every segment priced at most ``v`` per unit, stopping where the
        payment reaches the budget; ties go to the larger allocation.
        """
        budget = self.budget if budget is None else budget
        v = np.atleast_1d(np.asarray(v, dtype=np.float64))
        s = self.slopes
        # largest prefix of segments with slope <= v
        k = np.searchsorted(s, v + 1e-12, side="right")
        x_want = self.x[k]
        if self.tau[-1] <= budget + 1e-12:
            cap = self.x_max
        else:
            i = int(np.searchsorted(self.tau, budget, side="right")) - 1
            cap = float(self.x[i] + (budget - self.tau[i]) * (self.x[i + 1] - self.x[i])
                        / (self.tau[i + 1] - self.tau[i]))
        x = np.minimum(x_want, cap)
        return x, self(x)

    def restrict(self, hi: float) -> "AllocationPaymentFunction":
        """Schedule capped at allocation ``hi``."""
        return self.window(0.0, hi)

    def window(self, lo: float, hi: float) -> "AllocationPaymentFunction":
        """``tau(lo + x) - tau(lo)`` for ``x`` in ``[0, hi - lo]``."""
        lo = min(max(lo, 0.0), self.x_max)
        hi = min(max(hi, lo), self.x_max)
        inner = self.x[(self.x > lo + 1e-15) & (self.x < hi - 1e-15)]
        xs = np.concatenate(([lo], inner, [hi])) if hi > lo + 1e-15 else np.array([lo])
        ts = self(xs)
        return AllocationPaymentFunction(self.budget, xs - lo, ts - ts[0])


@dataclass(frozen=True, eq=False)
class ClosenessReport:
    objective: str
    q: np.ndarray
    A: np.ndarray
    pbar_runmax: np.ndarray
    p_runmax: np.ndarray
    ratio: np.ndarray
    zeta: float
    zeta_raw: float
    bound: float
    bound_name: str
    solver: str
    kappa: float | None = None
    grid_error: float = 0.0
    extras: dict = field(default_factory=dict)

    def violated(self, slack: float = 0.05) -> bool:
        return self.zeta > self.bound + slack

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "zeta_raw_curve": self.zeta_raw,
            "bound": self.bound,
            "bound_name": self.bound_name,
            "objective": self.objective,
            "solver": self.solver,
            "kappa": self.kappa,
            "grid_error": self.grid_error,
            "per_q": [
                {"q": float(q), "A": float(a), "Pbar_runmax": float(p), "ratio": float(r)}
                for q, a, p, r in zip(self.q, self.A, self.pbar_runmax, self.ratio)
            ],
            **self.extras,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


# ---------------------------------------------------------------------------
# kappa and theorem bounds


def kappa_of(budget: DiscreteDist) -> float:
    """``1 / Pr[b >= E b]``."""
    mean = budget.mean()
    pr = budget.tail(mean - 1e-12 * max(1.0, abs(mean)))
    if pr <= 0:
        raise DegenerateDistributionError("budget never reaches its mean")
    return 1.0 / pr


def closeness_bound(agent: Agent, objective: str) -> tuple[float, str]:
    """Tightest applicable closeness guarantee for this agent class."""
    if objective == "welfare":
        return 2.0, "welfare"
    if agent.utility == "linear":
        return 1.0, "linear"
    if agent.utility == "public-budget":
        return (1.0, "public-regular") if agent.regular_value else (2.0, "public-general")
    k = kappa_of(agent.budget)
    small_tail = 1 + 3 * k - 1 / k
    if agent.regular_value and 3.0 <= small_tail:
        return 3.0, "private-regular-value"
    return small_tail, "private-small-tail"


# ---------------------------------------------------------------------------
# relaxed private-budget LP


@dataclass(frozen=True, eq=False)
class ExAnteLpResult:
    value: float
    x: np.ndarray  # (n_values, n_budgets)
    p: np.ndarray
    solution: LpSolution
    agent: Agent


class RelaxedExAnteLp:
    """LP over per-type ``(x, p)``; only the ex ante right-hand side varies with ``q``.

    Constraints: IR at the lowest value of each budget level, adjacent value
    IC both ways within a level (global IC for linear utility), and
    ``U(v, b_j) >= v x(v, b_{j-1}) - p(v, b_{j-1})``.  Misreports to lower
    budgets are always affordable; chaining the last family with
    within-level IC covers every downward misreport.  Upward budget
    misreports are omitted.
    """

    def __init__(self, agent: Agent, objective: str = "revenue"):
        if objective not in ("revenue", "welfare"):
            raise ValueError(f"unknown objective {objective!r}")
        self.agent = agent
        self.objective = objective
        v = agent.value.support
        f = agent.value.probs
        b = agent.budget.support
        g = agent.budget.probs
        nv, nb = v.size, b.size
        N = nv * nb
        self.shape = (nv, nb)

        def xi(i, j):
            return j * nv + i

        rows, cols, vals = [], [], []
        r = 0

        def add(entries):
            nonlocal r
            for c, a in entries:
                rows.append(r)
                cols.append(c)
                vals.append(a)
            r += 1

        for j in range(nb):
            add([(xi(0, j), -v[0]), (N + xi(0, j), 1.0)])
            for i in range(nv - 1):
                lo, hi = xi(i, j), xi(i + 1, j)
                # type i+1 must not mimic type i
                add([(lo, v[i + 1]), (N + lo, -1.0), (hi, -v[i + 1]), (N + hi, 1.0)])
                # type i must not mimic type i+1
                add([(hi, v[i]), (N + hi, -1.0), (lo, -v[i]), (N + lo, 1.0)])
        for j in range(1, nb):
            for i in range(nv):
                lo, own = xi(i, j - 1), xi(i, j)
                add([(lo, v[i]), (N + lo, -1.0), (own, -v[i]), (N + own, 1.0)])
        self.A_ub = sp.csr_matrix((vals, (rows, cols)), shape=(r, 2 * N))
        self.b_ub = np.zeros(r)
        w = np.outer(g, f).reshape(-1)  # index j*nv + i
        self.A_eq = np.concatenate([w, np.zeros(N)])[None, :]
        if objective == "revenue":
            self.c = np.concatenate([np.zeros(N), w])
        else:
            self.c = np.concatenate([w * np.tile(v, nb), np.zeros(N)])
        self.lower = np.zeros(2 * N)
        self.upper = np.concatenate([np.ones(N), np.repeat(b, nv)])

    def program(self, q: float) -> LinearProgram:
        return LinearProgram(self.c, self.A_ub, self.b_ub, self.A_eq, [q], self.lower, self.upper)

    def solve(self, q: float, method: str = "auto") -> ExAnteLpResult:
        _check_q(q)
        q = min(max(q, 0.0), 1.0)
        sol = solve_lp(self.program(q), method)
        if sol.status == "infeasible":
            raise InfeasibleQuantileError(f"no mechanism sells with probability {q}")
        if not sol.ok:
            raise NumericalError(f"relaxed LP at q={q}: {sol.status}")
        nv, nb = self.shape
        N = nv * nb
        x = sol.x[:N].reshape(nb, nv).T
        p = sol.x[N:].reshape(nb, nv).T
        return ExAnteLpResult(sol.objective, x, p, sol, self.agent)


def exante_private_budget_lp(agent: Agent, q: float, objective: str = "revenue",
                             method: str = "auto") -> ExAnteLpResult:
    """Relaxed-LP upper bound on ``A(q)`` (see :class:`RelaxedExAnteLp`)."""
    return RelaxedExAnteLp(agent, objective).solve(q, method)


# ---------------------------------------------------------------------------
# public budget: two-option menus


class _Atoms:
    """Value atoms in descending order with quantile boundaries."""

    def __init__(self, dist: DiscreteDist):
        keep = dist.probs > 0
        self.w = dist.support[keep][::-1]
        mass = dist.probs[keep][::-1]
        self.Q = np.concatenate(([0.0], np.cumsum(mass)))
        self.Q[-1] = 1.0
        self.Wc = np.concatenate(([0.0], np.cumsum(self.w * mass)))
        self.tol = 1e-12

    def top_min(self, x):
        """Lowest value among the top-``x`` mass."""
        k = np.searchsorted(self.Q, np.asarray(x) - self.tol, side="left")
        return self.w[np.clip(k, 1, self.w.size) - 1]

    def below_max(self, x):
        """Highest value outside the top-``x`` mass (0 when nothing is left)."""
        x = np.asarray(x)
        k = np.searchsorted(self.Q, x + self.tol, side="right")
        out = self.w[np.clip(k, 1, self.w.size) - 1]
        return np.where(x >= 1 - self.tol, 0.0, out)

    def welfare(self, x):
        return np.interp(x, self.Q, self.Wc)


def exante_public_budget(agent: Agent, q: float, objective: str = "revenue"):
    """Optimal payoff and menu at ex ante probability ``q`` for a public (or no) budget.

    Any IC mechanism is a mixture of posted-price steps: step ``k`` serves
    the top ``Q_k`` mass at a per-step price between the values on either
    side of the boundary.  With step weights ``w_k`` and step payments
    ``y_k = w_k c_k`` everything is linear:

        max  sum Q_k y_k  (or sum W(Q_k) w_k)
        s.t. sum Q_k w_k = q,  sum y_k <= b,  sum w_k <= 1,
             v_{k+1} w_k <= y_k <= v_k w_k.

    The top type pays ``sum y_k``, so the budget row is exact.  The optimal
    vertex is read back as a menu (one option per distinct allocation).
    """
    if len(agent.budget) != 1:
        raise ParameterError("menus need a deterministic budget")
    _check_q(q)
    q = min(max(q, 0.0), 1.0)
    if q <= TOL:
        return 0.0, MenuMechanism(())
    b = agent.budget.max
    at = _Atoms(agent.value)
    K = at.w.size
    Qk = at.Q[1:]
    v_hi = at.w
    v_lo = np.concatenate((at.w[1:], [0.0]))
    if objective == "revenue":
        c = np.concatenate([np.zeros(K), Qk])
    else:
        c = np.concatenate([at.Wc[1:], np.zeros(K)])
    eye = np.eye(K)
    A_ub = np.vstack([
        np.concatenate([np.zeros(K), np.ones(K)])[None, :],
        np.concatenate([np.ones(K), np.zeros(K)])[None, :],
        np.hstack([eye * v_lo, -eye]),
        np.hstack([-eye * v_hi, eye]),
    ])
    b_ub = np.concatenate([[b, 1.0], np.zeros(2 * K)])
    A_eq = np.concatenate([Qk, np.zeros(K)])[None, :]
    sol = solve_lp(LinearProgram(c, A_ub, b_ub, A_eq, [q]), "simplex")
    if sol.status == "infeasible":
        raise InfeasibleQuantileError(f"no menu sells with probability {q}")
    if not sol.ok:
        raise NumericalError(f"menu program at q={q}: {sol.status}")
    w, y = sol.x[:K], sol.x[K:]
    # type k (descending value) gets sum of steps reaching it
    alloc = np.cumsum(w[::-1])[::-1]
    pay = np.cumsum(y[::-1])[::-1]
    opts = {}
    for x, p in zip(alloc, pay):
        if x > 1e-10:
            opts.setdefault(round(float(x), 10), float(p))
    menu = MenuMechanism(tuple((min(x, 1.0), p) for x, p in opts.items()))
    return float(sol.objective), menu


# ---------------------------------------------------------------------------
# brute force with full conditional IC


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    value: float
    x: np.ndarray
    p: np.ndarray
    upward_binding: bool
    patterns: int
    feasible_patterns: int


BRUTE_MAX_VALUES = 4
BRUTE_MAX_BUDGETS = 3
CLASS_EPS = 1e-9


def brute_force_exante(agent: Agent, q: float, objective: str = "revenue") -> BruteForceResult:
    """Exact optimum under full conditional IC for tiny agents.

    Each type's payment falls in a class ``(b_{c-1}, b_c]``; a class
    pattern fixes which budget levels can afford which types, turning the
    conditional constraints into plain ones.  One LP per pattern (solved
    with the dense simplex); the best pattern wins.
    """
    v = agent.value.support
    f = agent.value.probs
    b = agent.budget.support
    g = agent.budget.probs
    nv, nb = v.size, b.size
    if nv > BRUTE_MAX_VALUES or nb > BRUTE_MAX_BUDGETS:
        raise SizeError(
            f"brute force handles at most {BRUTE_MAX_VALUES} values x {BRUTE_MAX_BUDGETS} budgets"
        )
    _check_q(q)
    q = min(max(q, 0.0), 1.0)
    types = [(i, j) for j in range(nb) for i in range(nv)]
    T = len(types)
    w = np.array([f[i] * g[j] for i, j in types])
    vt = np.array([v[i] for i, _ in types])
    lvl = np.array([j for _, j in types])
    eps = CLASS_EPS * max(1.0, float(b.max()))

    if objective == "revenue":
        c = np.concatenate([np.zeros(T), w])
    else:
        c = np.concatenate([w * vt, np.zeros(T)])
    base_rows = []
    for t in range(T):
        row = np.zeros(2 * T)
        row[t], row[T + t] = -vt[t], 1.0
        base_rows.append(row)
    pair_rows = {}
    for t in range(T):
        for s in range(T):
            if s == t:
                continue
            row = np.zeros(2 * T)
            row[s] += vt[t]
            row[T + s] -= 1.0
            row[t] -= vt[t]
            row[T + t] += 1.0
            pair_rows[(t, s)] = row
    down = [(t, s) for (t, s) in pair_rows if lvl[s] <= lvl[t]]
    up = [(t, s) for (t, s) in pair_rows if lvl[s] > lvl[t]]
    A_base = np.array(base_rows + [pair_rows[k] for k in down])
    A_eq = np.concatenate([w, np.zeros(T)])[None, :]
    choosers = [s for s in range(T) if lvl[s] > 0]

    best = None
    n_pat = n_feas = 0
    for classes in itertools.product(*[range(lvl[s] + 1) for s in choosers]):
        n_pat += 1
        cls = np.zeros(T, dtype=int)
        cls[choosers] = classes
        lower = np.zeros(2 * T)
        upper = np.concatenate([np.ones(T), b[lvl]])
        for s in choosers:
            k = cls[s]
            upper[T + s] = b[k]
            if k > 0:
                lower[T + s] = b[k - 1] + eps
        if np.any(lower > upper):
            continue
        active_up = [(t, s) for (t, s) in up if cls[s] <= lvl[t]]
        A = np.vstack([A_base] + [pair_rows[k][None, :] for k in active_up])
        lp = LinearProgram(c, A, np.zeros(A.shape[0]), A_eq, [q], lower, upper)
        sol = solve_lp(lp, "simplex")
        if not sol.ok:
            continue
        n_feas += 1
        if best is None or sol.objective > best[0] + 1e-12:
            best = (sol.objective, sol, cls, lower, upper)
    if best is None:
        raise InfeasibleQuantileError(f"no IC mechanism sells with probability {q}")
    val, sol, cls, lower, upper = best
    x, p = sol.x[:T], sol.x[T:]
    # binding = some upward row or class-only bound carries a nonzero multiplier;
    # with all of them at zero, dropping them leaves the optimum unchanged
    n_fixed = len(base_rows) + len(down)
    binding = bool(np.any(sol.y_ub[n_fixed:] > 1e-9))
    red = c - A_base.T @ sol.y_ub[:n_fixed] - A_eq[0] * sol.y_eq[0]
    if sol.y_ub.size > n_fixed:
        A_up = np.vstack([pair_rows[k] for k in up if cls[k[1]] <= lvl[k[0]]])
        red = red - A_up.T @ sol.y_ub[n_fixed:]
    natural_hi = np.concatenate([np.ones(T), b[lvl]])
    for s_ in choosers:
        k = T + s_
        at_class_hi = upper[k] < natural_hi[k] - 1e-12 and abs(sol.x[k] - upper[k]) < 1e-9
        at_class_lo = lower[k] > 0 and abs(sol.x[k] - lower[k]) < 1e-9
        if (at_class_hi or at_class_lo) and abs(red[k]) > 1e-9:
            binding = True
    X = np.zeros((nv, nb))
    P = np.zeros((nv, nb))
    for t, (i, j) in enumerate(types):
        X[i, j], P[i, j] = x[t], p[t]
    return BruteForceResult(float(val), X, P, binding, n_pat, n_feas)


# ---------------------------------------------------------------------------
# curves and closeness


def default_solver(agent: Agent) -> str:
    return "two-menu" if agent.utility == "public-budget" else "lp-relaxed"


def exante_curve(agent: Agent, objective: str = "revenue", m: int = DEFAULT_GRID,
                 solver: str | None = None, method: str = "auto",
                 threads: int | None = None) -> ExAnteCurve:
    """``A(q)`` on the grid ``j/m``; grid points are solved independently."""
    if m < 2:
        raise ParameterError("grid size must be at least 2")
    solver = solver or default_solver(agent)
    q = np.arange(m + 1) / m
    if solver == "two-menu":
        vals = [exante_public_budget(agent, float(x), objective)[0] for x in q]
    elif solver == "lp-relaxed":
        lp = RelaxedExAnteLp(agent, objective)
        vals = pmap(lambda x: lp.solve(float(x), method).value if x > 0 else 0.0, q, threads)
    elif solver == "brute-force":
        vals = [brute_force_exante(agent, float(x), objective).value if x > 0 else 0.0 for x in q]
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return ExAnteCurve(objective, q, np.maximum(np.array(vals, dtype=np.float64), 0.0), solver)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 1e-15, num / np.where(den > 1e-15, den, 1.0),
                     np.where(num > 1e-12, np.inf, 1.0))
    return r


def closeness(agent: Agent, objective: str = "revenue", m: int = DEFAULT_GRID,
              curve: ExAnteCurve | None = None, posting: PayoffCurve | None = None,
              method: str = "auto", threads: int | None = None) -> ClosenessReport:
    """``zeta = max_q A(q) / max_{q' <= q} Pbar(q')`` on the grid ``j/m``.

    The same ratio against the raw curve ``P`` is reported as ``zeta_raw``.
    """
    posting = posting or price_posting_curve(agent, objective, m)
    hull = concave_hull(posting)
    curve = curve or exante_curve(agent, objective, m, method=method, threads=threads)
    q = curve.q
    pbar = hull.at(np.minimum(q, hull.argmax))
    raw_run = np.maximum.accumulate(posting.values)
    p_run = np.array([raw_run[np.searchsorted(posting.q, x, side="right") - 1] for x in q])
    ratio = _ratio(curve.values, pbar)
    ratio_raw = _ratio(curve.values, p_run)
    live = q > 0
    bound, name = closeness_bound(agent, objective)
    kappa = kappa_of(agent.budget) if agent.utility == "private-budget" else None
    return ClosenessReport(
        objective, q, curve.values, pbar, p_run, ratio,
        float(ratio[live].max()), float(ratio_raw[live].max()), float(bound), name,
        curve.solver, kappa, hull.grid_error,
        {"exante_max": curve.max, "posting_max": posting.max, "hull_max": hull.max},
    )


# ---------------------------------------------------------------------------
# allocation-payment functions from LP solutions


def tau_family(result: ExAnteLpResult) -> list[AllocationPaymentFunction]:
    """Lower convex envelope of each budget level's ``(x, p)`` points and the origin."""
    out = []
    b = result.agent.budget.support
    for j in range(b.size):
        pts = np.column_stack([result.x[:, j], result.p[:, j]])
        pts = np.vstack([[0.0, 0.0], pts])
        pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
        hull: list[tuple[float, float]] = []
        for x, y in pts:
            if hull and x <= hull[-1][0] + 1e-12:
                continue  # same allocation: keep the cheaper (first) point
            while len(hull) >= 2:
                (x0, y0), (x1, y1) = hull[-2], hull[-1]
                if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) <= 0:
                    hull.pop()
                else:
                    break
            hull.append((float(x), float(y)))
        # the envelope must be nondecreasing; drop a falling tail
        xs = np.array([h[0] for h in hull])
        ts = np.maximum.accumulate(np.array([h[1] for h in hull]))
        ts[0] = 0.0
        out.append(AllocationPaymentFunction(float(b[j]), xs, np.minimum(ts, b[j])))
    return out


def evaluate_taus(agent: Agent, taus, budgets=None):
    """Per-type ``(x, p)`` arrays of shape ``(n_values, n_budgets)`` under ``taus``."""
    v = agent.value.support
    b = agent.budget.support
    X = np.zeros((v.size, b.size))
    P = np.zeros((v.size, b.size))
    for j, tau in enumerate(taus):
        cap = b[j] if budgets is None else budgets[j]
        X[:, j], P[:, j] = tau.choose(v, cap)
    return X, P


def type_weights(agent: Agent) -> np.ndarray:
    return np.outer(agent.value.probs, agent.budget.probs)
