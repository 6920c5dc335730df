"""Price-posting payoff curves in quantile space, ironing, virtual values.

A budgeted buyer facing per-unit price ``p`` with ``v >= p`` buys the lottery
``min(1, b/p)``.  Value atoms make the allocation jump at ``p = v_j``; the
jump is bridged by a tie fraction (the share of the atom that buys), so every
quantile up to the ceiling ``q_max`` is sold exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dist import Agent, DEFAULT_GRID

OBJECTIVES = ("revenue", "welfare")
BISECT_ITERS = 200
ALLOC_TOL = 1e-9


class InfeasibleQuantileError(ValueError):
    """Requested sale probability exceeds what any price achieves."""


def _check_objective(objective: str) -> None:
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")


def _budget_terms(agent: Agent, p):
    """Return ``(E[min(1, b/p)], E[min(p, b)])`` for positive prices ``p``."""
    b = agent.budget.support
    g = agent.budget.probs
    cg = np.concatenate(([0.0], np.cumsum(g)))
    cbg = np.concatenate(([0.0], np.cumsum(g * b)))
    idx = np.searchsorted(b, p, side="left")  # budgets strictly below p
    above = np.clip(1.0 - cg[idx], 0.0, 1.0)
    below_sum = cbg[idx]
    return above + below_sum / p, p * above + below_sum


def _value_terms(agent: Agent, p):
    """Return ``(Pr[v > p], Pr[v = p], E[v 1{v > p}])``."""
    v = agent.value.support
    f = agent.value.probs
    cf = np.concatenate(([0.0], np.cumsum(f)))
    cvf = np.concatenate(([0.0], np.cumsum(f * v)))
    hi = np.searchsorted(v, p, side="right")
    lo = np.searchsorted(v, p, side="left")
    gt = np.clip(1.0 - cf[hi], 0.0, 1.0)
    at = cf[hi] - cf[lo]
    v_gt = cvf[-1] - cvf[hi]
    return gt, at, v_gt


def _positive_price(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0):
        raise ValueError("price must be positive")
    return p


def expected_allocation(agent: Agent, p, tie=1.0):
    """Ex ante sale probability ``Pr[v >= p] E[min(1, b/p)]`` at per-unit price ``p``.

    ``tie`` is the share of a value atom sitting exactly at ``p`` that buys.
    """
    pa = _positive_price(p)
    frac, _ = _budget_terms(agent, pa)
    gt, at, _ = _value_terms(agent, pa)
    out = (gt + tie * at) * frac
    return out if np.ndim(p) else float(out)


def price_posting_payoff(agent: Agent, p, objective: str = "revenue", tie=1.0):
    """Revenue ``Pr[v >= p] E[min(p, b)]`` or welfare ``E[v 1{v >= p}] E[min(1, b/p)]``.

    ``p = 0`` is read as the limit from above (everyone buys for free).
    """
    _check_objective(objective)
    raw = np.asarray(p, dtype=np.float64)
    if np.any(raw < 0):
        raise ValueError("price must be nonnegative")
    pa = np.where(raw > 0, raw, np.finfo(float).tiny)
    frac, pay = _budget_terms(agent, pa)
    gt, at, v_gt = _value_terms(agent, pa)
    if objective == "revenue":
        out = np.where(raw > 0, (gt + tie * at) * pay, 0.0)
    else:
        out = (v_gt + tie * at * pa) * frac
    return out if np.ndim(p) else float(out)


def allocation_ceiling(agent: Agent) -> float:
    """Largest sale probability reachable as the price tends to zero."""
    return agent.value.tail(np.nextafter(0.0, 1.0)) * agent.budget.tail(np.nextafter(0.0, 1.0))


@dataclass(frozen=True)
class Offers:
    """Market clearing offers for a batch of quantiles."""

    q: np.ndarray
    price: np.ndarray
    tie: np.ndarray


def clearing_offers(agent: Agent, q) -> Offers:
    """Market clearing price and tie fraction for each quantile in ``q``.

    Quantiles inside an allocation jump get the atom's price with a
    fractional tie; elsewhere the price comes from bisection on the
    continuous, nonincreasing allocation between atoms.
    """
    qs = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if np.any(qs < 0):
        raise InfeasibleQuantileError("quantile must be nonnegative")
    q_max = allocation_ceiling(agent)
    if np.any(qs > q_max + 1e-12):
        raise InfeasibleQuantileError(
            f"quantile {qs.max():.6g} exceeds the sale ceiling {q_max:.6g}"
        )
    qs = np.minimum(qs, q_max)
    vpos = agent.value.support[agent.value.support > 0]
    price = np.full(qs.shape, agent.value.max, dtype=np.float64)
    tie = np.zeros(qs.shape)
    if vpos.size == 0:
        return Offers(qs, price, tie)

    frac_at, _ = _budget_terms(agent, vpos)
    ge = agent.value.tail(vpos)
    gt = np.concatenate((ge[1:], [0.0]))
    a_hi = ge * frac_at
    a_lo = gt * frac_at

    live = qs > 0
    # last atom whose full inclusion still sells at least q
    jstar = np.searchsorted(-a_hi, -qs, side="right") - 1
    in_jump = live & (jstar >= 0)
    js = np.maximum(jstar, 0)
    in_jump &= a_lo[js] <= qs
    width = a_hi[js] - a_lo[js]
    with np.errstate(invalid="ignore", divide="ignore"):
        th = np.where(width > 0, (qs - a_lo[js]) / width, 1.0)
    price = np.where(in_jump, vpos[js], price)
    tie = np.where(in_jump, np.clip(th, 0.0, 1.0), tie)

    cont = live & ~in_jump
    if np.any(cont):
        jc = jstar[cont]
        qc = qs[cont]
        lo = np.where(jc >= 0, vpos[np.maximum(jc, 0)], 0.0)
        hi_idx = np.minimum(jc + 1, vpos.size - 1)
        hi = vpos[hi_idx]
        mass = np.where(jc >= 0, gt[np.maximum(jc, 0)], ge[0])
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            ok = mass * _budget_terms(agent, mid)[0] >= qc
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1.0)):
                break
        # tie 0: exact between atoms, and at the lower atom when q hits a_lo
        price[cont] = lo
        tie[cont] = 0.0
    return Offers(qs, price, tie)


def market_clearing_price(agent: Agent, q: float) -> float:
    """Per-unit price selling with probability ``q``.

    Inside an allocation jump this is the atom's (lower adjacent) price;
    use :func:`clearing_offers` for the accompanying tie fraction.
    """
    if q <= 0:
        raise InfeasibleQuantileError("quantile must be positive")
    return float(clearing_offers(agent, q).price[0])


def offer_payoff(agent: Agent, offers: Offers, objective: str) -> np.ndarray:
    out = np.zeros(offers.q.shape)
    live = offers.q > 0
    if np.any(live):
        out[live] = price_posting_payoff(
            agent, offers.price[live], objective, offers.tie[live]
        )
    return out


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class PayoffCurve:
    """Sampled quantile-to-payoff map.

    ``q`` holds the regular grid ``j/m`` merged with the quantiles where the
    allocation jumps at a value atom; the curve is linear between knots
    that bracket a jump, so interpolation there is exact.
    """

    objective: str
    q: np.ndarray
    values: np.ndarray
    q_max: float = 1.0
    grid_size: int = DEFAULT_GRID

    def at(self, q):
        return np.interp(q, self.q, self.values)

    def on_grid(self, m: int | None = None):
        m = m or self.grid_size
        grid = np.arange(m + 1) / m
        return grid, self.at(grid)

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def argmax(self) -> float:
        return float(self.q[int(np.argmax(self.values))])

    def to_csv(self, path, m: int | None = None) -> Path:
        grid, vals = self.on_grid(m)
        return write_curve_csv(path, grid, vals)


def write_curve_csv(path, q, values) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "payoff"])
        for a, b in zip(q, values):
            w.writerow([f"{a:.12g}", f"{b:.12g}"])
    return path


def _merge_quantiles(*parts) -> np.ndarray:
    q = np.unique(np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts]))
    keep = np.concatenate(([True], np.diff(q) > 1e-13))
    return q[keep]


def price_posting_curve(agent: Agent, objective: str = "revenue", m: int = DEFAULT_GRID) -> PayoffCurve:
    """Price-posting payoff ``P(q)`` at the grid ``j/m`` plus allocation-jump knots.

    Quantiles above the ceiling ``q_max`` keep the payoff at ``q_max``.
    """
    _check_objective(objective)
    if m < 2:
        raise ValueError("grid size must be at least 2")
    q_max = allocation_ceiling(agent)
    vpos = agent.value.support[agent.value.support > 0]
    knots = []
    if vpos.size:
        frac_at, _ = _budget_terms(agent, vpos)
        ge = agent.value.tail(vpos)
        gt = np.concatenate((ge[1:], [0.0]))
        knots = [ge * frac_at, gt * frac_at]
    q = _merge_quantiles(np.arange(m + 1) / m, *knots, [q_max])
    inside = q <= q_max
    vals = np.zeros(q.shape)
    offers = clearing_offers(agent, q[inside])
    vals[inside] = offer_payoff(agent, offers, objective)
    if not np.all(inside):
        vals[~inside] = vals[inside][-1]
    return PayoffCurve(objective, q, vals, float(q_max), m)


@dataclass(frozen=True, eq=False)
class ConcaveCurve:
    """Piecewise-linear concave curve given by its breakpoints.

    ``grid_error`` bounds the gap to the true hull of the underlying
    continuous curve (Lipschitz constant times the widest sample step).
    """

    q: np.ndarray
    values: np.ndarray
    objective: str = "revenue"
    grid_error: float = 0.0

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.q)

    def at(self, q):
        return np.interp(q, self.q, self.values)

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def argmax(self) -> float:
        return float(self.q[int(np.argmax(self.values))])

    def segment(self, q):
        """Index ``s`` of the segment ``(q_s, q_{s+1}]`` holding ``q`` (0 for q = 0)."""
        idx = np.searchsorted(self.q, q, side="left") - 1
        return np.clip(idx, 0, self.q.size - 2)


def concave_hull(curve) -> ConcaveCurve:
    """Upper concave envelope via a monotone-chain scan over the curve's points."""
    if isinstance(curve, ConcaveCurve):
        qs, vs, objective = curve.q, curve.values, curve.objective
    else:
        qs, vs, objective = curve.q, curve.values, curve.objective
    hq: list[float] = []
    hv: list[float] = []
    for x, y in zip(qs.tolist(), vs.tolist()):
        while len(hq) >= 2:
            cross = (hq[-1] - hq[-2]) * (y - hv[-2]) - (hv[-1] - hv[-2]) * (x - hq[-2])
            if cross >= 0:
                hq.pop()
                hv.pop()
            else:
                break
        hq.append(x)
        hv.append(y)
    if len(hq) == 1:
        hq.append(hq[0] + 1.0)
        hv.append(hv[0])
    steps = np.diff(qs)
    lip = float(np.max(np.abs(np.diff(vs) / steps))) if steps.size else 0.0
    err = lip * float(steps.max()) if steps.size else 0.0
    return ConcaveCurve(np.array(hq), np.array(hv), objective, err)


def virtual_value(hull: ConcaveCurve, q):
    """Left derivative of the hull; at ``q = 0`` the first segment's slope."""
    qa = np.asarray(q, dtype=np.float64)
    if np.any((qa < 0) | (qa > 1 + 1e-12)):
        raise ValueError("quantile must lie in [0, 1]")
    out = hull.slopes[hull.segment(qa)]
    return out if np.ndim(q) else float(out)


def runmax(values) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(values, dtype=np.float64))
