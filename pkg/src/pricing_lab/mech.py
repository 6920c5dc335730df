"""Multi-agent pricing mechanisms: sequential and oblivious posted pricing,
anonymous pricing, the marginal payoff mechanism, the i.i.d. backward
induction, and the decomposition verifiers for the closeness theorems.

Simulations draw from counter-based substreams (see :mod:`.parallel`), so a
fixed seed gives identical results for every thread count.  Payments follow
per-unit pricing: a buyer pays ``p * x`` for the lottery ``x`` whatever its
outcome, and welfare credits ``v * x``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .curves import (
    ConcaveCurve,
    _budget_terms,
    _value_terms,
    allocation_ceiling,
    clearing_offers,
    concave_hull,
    expected_allocation,
    offer_payoff,
    price_posting_curve,
    price_posting_payoff,
)
from .dist import Agent, sample
from .envs import Environment, KUnit, Partition, ear_optimize
from .exante import (
    AllocationPaymentFunction,
    ExAnteLpResult,
    RelaxedExAnteLp,
    evaluate_taus,
    kappa_of,
    tau_family,
    type_weights,
)
from .parallel import seeded_blocks

POSTING_GRID = 1000
ORDER_EXHAUSTIVE_N = 7
RANDOM_ORDERS = 200
DECOMP_TOL = 1e-6

STREAM_SPP = 1
STREAM_MPM = 2
STREAM_ORDERS = 3


class OrdinaryGoodError(ValueError):
    """Market clearing offers are not monotone in the quantile."""


def gamma_matroid() -> float:
    return math.e / (math.e - 1.0)


def gamma_kunit(k: int) -> float:
    return 1.0 / (1.0 - 1.0 / math.sqrt(2.0 * math.pi * k))


def gamma_for(env: Environment) -> float:
    """Correlation-gap factor: the k-unit bound when it is the tighter one."""
    g = gamma_matroid()
    if isinstance(env, KUnit) and env.k >= 1:
        g = min(g, gamma_kunit(env.k))
    return g


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class SppPolicy:
    order: tuple
    quantiles: np.ndarray
    ear: float | None = None

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        q = np.asarray(self.quantiles, dtype=np.float64)
        if sorted(order) != list(range(q.size)):
            raise ValueError("ordering must be a permutation of the agents")
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("policy quantiles must lie in [0, 1]")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "quantiles", q)


@dataclass
class SimResult:
    mechanism: str
    objective: str
    mean: float
    se: float
    samples: int
    serve_prob: np.ndarray
    seed: int
    extras: dict = field(default_factory=dict)
    config_digest: str | None = None

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "objective": self.objective,
            "mean": self.mean,
            "se": self.se,
            "samples": self.samples,
            "serve_prob": [float(s) for s in self.serve_prob],
            "seed": self.seed,
            "config_digest": self.config_digest,
            **_jsonable(self.extras),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_digest(record) -> str:
    text = json.dumps(_jsonable(record), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class _Stats:
    count: int
    mean: float
    m2: float
    serve: np.ndarray


def _block_stats(payoff: np.ndarray, serve: np.ndarray) -> _Stats:
    mean = float(payoff.mean())
    return _Stats(payoff.size, mean, float(((payoff - mean) ** 2).sum()), serve)


def _combine(parts: Sequence[_Stats]) -> _Stats:
    """Chan's pairwise update, applied in block order."""
    n, mean, m2 = 0, 0.0, 0.0
    serve = np.zeros_like(parts[0].serve, dtype=np.float64)
    for s in parts:
        tot = n + s.count
        delta = s.mean - mean
        mean += delta * s.count / tot
        m2 += s.m2 + delta * delta * n * s.count / tot
        n = tot
        serve = serve + s.serve
    return _Stats(n, mean, m2, serve)


def _result(mechanism, objective, parts, seed, extras=None) -> SimResult:
    s = _combine(parts)
    sd = math.sqrt(s.m2 / (s.count - 1)) if s.count > 1 else 0.0
    return SimResult(mechanism, objective, s.mean, sd / math.sqrt(s.count), s.count,
                     s.serve / s.count, seed, dict(extras or {}))


# ---------------------------------------------------------------------------
# feasibility tracking for vectorized simulation


class _Served:
    """Served-set state for a block of samples."""

    def __init__(self, env: Environment, size: int):
        self.env = env
        if isinstance(env, KUnit):
            self.count = np.zeros(size, dtype=np.int64)
        elif isinstance(env, Partition):
            self.block_of = np.empty(env.n, dtype=np.int64)
            for j, b in enumerate(env.blocks):
                self.block_of[list(b)] = j
            self.count = np.zeros((len(env.blocks), size), dtype=np.int64)
        else:
            self.table = env.independent_table
            self.mask = np.zeros(size, dtype=np.int64)

    def can_add(self, i: int) -> np.ndarray:
        env = self.env
        if isinstance(env, KUnit):
            return self.count < env.k
        if isinstance(env, Partition):
            j = self.block_of[i]
            return self.count[j] < env.caps[j]
        return self.table[self.mask | (1 << i)]

    def add(self, i: int, got: np.ndarray) -> None:
        env = self.env
        if isinstance(env, KUnit):
            self.count += got
        elif isinstance(env, Partition):
            self.count[self.block_of[i]] += got
        else:
            self.mask |= np.where(got, 1 << i, 0)


def _lottery(agent_v, agent_b, price, tie):
    """Per-type allocation ``min(1, b/p) (1{v > p} + tie 1{v = p})``."""
    frac = np.minimum(1.0, agent_b / price)
    buys = np.where(agent_v > price, 1.0, np.where(agent_v == price, tie, 0.0))
    return frac * buys


def _draw_types(agents, rng, size):
    vals = np.empty((len(agents), size))
    buds = np.empty((len(agents), size))
    for i, a in enumerate(agents):
        vals[i] = sample(a.value, rng, size)
        buds[i] = sample(a.budget, rng, size)
    return vals, buds


def _posting_block(agents, env, order, prices, ties, objective, rng, size):
    vals, buds = _draw_types(agents, rng, size)
    coins = rng.random((len(agents), size))
    state = _Served(env, size)
    payoff = np.zeros(size)
    offered = np.zeros(len(agents))
    for i in order:
        ok = state.can_add(i)
        x = _lottery(vals[i], buds[i], prices[i], ties[i]) * ok
        payoff += (prices[i] if objective == "revenue" else vals[i]) * x
        state.add(i, coins[i] < x)
        offered[i] = ok.sum()
    return _block_stats(payoff, offered)


def _simulate_offers(agents, env, order, prices, ties, objective, samples, seed, threads,
                     stream=STREAM_SPP):
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if len(agents) != env.n:
        raise ValueError(f"{len(agents)} agents for an environment on {env.n}")
    fn = lambda rng, size: _posting_block(agents, env, order, prices, ties, objective, rng, size)
    return seeded_blocks(fn, samples, seed, stream, threads)


def _policy_offers(agents, quantiles):
    prices, ties = [], []
    for a, q in zip(agents, quantiles):
        q = min(float(q), allocation_ceiling(a))
        off = clearing_offers(a, q)
        prices.append(float(off.price[0]))
        ties.append(float(off.tie[0]))
    return prices, ties


def spp_simulate(agents: Sequence[Agent], env: Environment, policy: SppPolicy,
                 objective: str = "revenue", samples: int = 100_000, seed: int = 0,
                 threads: int | None = None) -> SimResult:
    """Sequential quantile pricing: agent ``i`` sees the clearing price for ``q_i`` when feasible."""
    prices, ties = _policy_offers(agents, policy.quantiles)
    parts = _simulate_offers(agents, env, policy.order, prices, ties, objective, samples, seed, threads)
    return _result("spp", objective, parts, seed,
                   {"order": list(policy.order), "quantiles": policy.quantiles, "prices": prices})


# ---------------------------------------------------------------------------
# policies


def posting_hulls(agents: Sequence[Agent], objective: str = "revenue",
                  m: int = POSTING_GRID) -> list[ConcaveCurve]:
    return [concave_hull(price_posting_curve(a, objective, m)) for a in agents]


def correlation_gap_policy(agents: Sequence[Agent], env: Environment, objective: str = "revenue",
                           hulls: Sequence[ConcaveCurve] | None = None,
                           m: int = POSTING_GRID) -> SppPolicy:
    """Quantiles from the ex ante relaxation on the ironed curves, served by decreasing hull value."""
    hulls = list(hulls) if hulls is not None else posting_hulls(agents, objective, m)
    ear = ear_optimize(hulls, env)
    q = np.array([min(x, allocation_ceiling(a)) for x, a in zip(ear.profile, agents)])
    vals = [float(h.at(x)) for h, x in zip(hulls, q)]
    order = sorted(range(len(agents)), key=lambda i: (-vals[i], i))
    return SppPolicy(tuple(order), q, ear.value)


def _same_agents(agents) -> bool:
    a0 = agents[0]
    return all(
        a.utility == a0.utility
        and np.array_equal(a.value.support, a0.value.support)
        and np.array_equal(a.value.probs, a0.value.probs)
        and np.array_equal(a.budget.support, a0.budget.support)
        and np.array_equal(a.budget.probs, a0.budget.probs)
        for a in agents[1:]
    )


def _orders(agents, quantiles, order_mode, count, seed):
    n = len(agents)
    if _same_agents(agents) and np.allclose(quantiles, quantiles[0]):
        return [tuple(range(n))], "iid"
    if order_mode == "all-permutations" or (order_mode == "auto" and n <= ORDER_EXHAUSTIVE_N):
        if n > ORDER_EXHAUSTIVE_N:
            raise ValueError(f"exhaustive orders need n <= {ORDER_EXHAUSTIVE_N}")
        return list(itertools.permutations(range(n))), "exhaustive"
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_ORDERS,)))
    means = [a.value.mean() for a in agents]
    up = tuple(sorted(range(n), key=lambda i: (means[i], i)))
    orders = [up, tuple(reversed(up))]
    orders += [tuple(int(i) for i in rng.permutation(n)) for _ in range(count)]
    return orders, "random-lower-bound"


def opp_evaluate(agents: Sequence[Agent], env: Environment, quantiles, objective: str = "revenue",
                 order_mode: str = "auto", count: int = RANDOM_ORDERS, samples: int = 100_000,
                 seed: int = 0, threads: int | None = None) -> SimResult:
    """Worst mean payoff over arrival orders, all orders sharing the same draws.

    Identical agents with equal quantiles need one order.  Beyond
    ``ORDER_EXHAUSTIVE_N`` agents the sampled orders only bound the
    adversary's damage from below; ``extras['order_mode']`` says which.
    """
    quantiles = np.asarray(quantiles, dtype=np.float64)
    prices, ties = _policy_offers(agents, quantiles)
    orders, mode = _orders(agents, quantiles, order_mode, count, seed)
    best = None
    for o in orders:
        r = _result("opp", objective,
                    _simulate_offers(agents, env, o, prices, ties, objective, samples, seed, threads),
                    seed)
        if best is None or r.mean < best[0].mean:
            best = (r, o)
    res, worst = best
    res.extras.update({"order_mode": mode, "orders_evaluated": len(orders),
                       "worst_order": list(worst), "quantiles": quantiles, "prices": prices})
    return res


def anonymous_pricing(agents: Sequence[Agent], env: Environment, objective: str = "revenue",
                      prices=None, samples: int = 10_000, seed: int = 0,
                      threads: int | None = None) -> SimResult:
    """Best single price for all agents, each price judged at its worst arrival order."""
    if prices is None:
        top = max(a.value.max for a in agents)
        atoms = np.unique(np.concatenate([a.value.support for a in agents]))
        prices = np.unique(np.concatenate((atoms[atoms > 0], np.linspace(0, top, 201)[1:])))
    prices = np.asarray(prices, dtype=np.float64)
    n = len(agents)
    if _same_agents(agents):
        orders = [tuple(range(n))]
    elif n <= ORDER_EXHAUSTIVE_N:
        orders = list(itertools.permutations(range(n)))
    else:
        orders, _ = _orders(agents, np.arange(n, dtype=float), "random", RANDOM_ORDERS, seed)
    best = None
    for p in prices:
        worst = None
        for o in orders:
            r = _result("ap", objective,
                        _simulate_offers(agents, env, o, [p] * n, [1.0] * n, objective,
                                         samples, seed, threads),
                        seed)
            if worst is None or r.mean < worst[0].mean:
                worst = (r, o)
        if best is None or worst[0].mean > best[0].mean + 1e-12:
            best = (worst[0], worst[1], float(p))
    res, order, price = best
    res.extras.update({"price": price, "worst_order": list(order), "prices_tried": int(prices.size)})
    return res


# ---------------------------------------------------------------------------
# backward induction


@dataclass(frozen=True, eq=False)
class DpTable:
    V: np.ndarray  # (n + 1, k + 1)
    price: np.ndarray  # (n, k + 1); nan where no unit is left
    prices: np.ndarray
    objective: str

    @property
    def value(self) -> float:
        return float(self.V[0, -1])


def default_price_grid(agent: Agent, points: int = 4001) -> np.ndarray:
    top = agent.value.max
    atoms = agent.value.support[agent.value.support > 0]
    grid = np.linspace(0.0, top, points)[1:]
    # a price above every value sells nothing, so passing is always available
    return np.unique(np.concatenate((atoms, grid, [2.0 * top + 1.0])))


def opp_iid_dp(agent: Agent, n: int, k: int = 1, objective: str = "revenue",
               prices=None) -> DpTable:
    """``V(i, u) = max_p payoff(p) + a(p) V(i+1, u-1) + (1 - a(p)) V(i+1, u)``."""
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    prices = default_price_grid(agent) if prices is None else np.asarray(prices, dtype=np.float64)
    if prices.size == 0 or np.any(prices <= 0):
        raise ValueError("price grid must be nonempty and positive")
    pay = price_posting_payoff(agent, prices, objective)
    alloc = expected_allocation(agent, prices)
    V = np.zeros((n + 1, k + 1))
    P = np.full((n, k + 1), np.nan)
    for i in range(n - 1, -1, -1):
        for u in range(1, k + 1):
            cand = pay + alloc * V[i + 1, u - 1] + (1.0 - alloc) * V[i + 1, u]
            j = int(np.argmax(cand))
            V[i, u] = cand[j]
            P[i, u] = prices[j]
    return DpTable(V, P, prices, objective)


# ---------------------------------------------------------------------------
# marginal payoff mechanism


@dataclass(frozen=True, eq=False)
class _MpmAgent:
    agent: Agent
    hq: np.ndarray  # hull breakpoints
    slopes: np.ndarray  # strictly decreasing
    price: np.ndarray  # clearing offer at each breakpoint
    tie: np.ndarray

    @classmethod
    def build(cls, agent: Agent, hull: ConcaveCurve) -> "_MpmAgent":
        ceil = allocation_ceiling(agent)
        off = clearing_offers(agent, np.minimum(hull.q, ceil))
        step = np.diff(off.price)
        tie_drop = (step == 0) & (np.diff(off.tie) < -1e-12)
        if np.any(step > 1e-12) or np.any(tie_drop):
            raise OrdinaryGoodError("allocation at the clearing offer is not monotone in q")
        return cls(agent, hull.q, hull.slopes, off.price, off.tie)

    def quantile(self, v, b, u):
        """Inverse of ``H(q) = x^q(t)``: the first quantile whose offer gives ``t`` at least ``u``."""
        c = np.minimum(v, b / np.maximum(u, 1e-300))
        pos = c > 0
        cc = np.where(pos, c, 1.0)
        frac, _ = _budget_terms(self.agent, cc)
        gt, at, _ = _value_terms(self.agent, cc)
        at_value = c >= v  # the binding cap is the value itself
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(at_value, u / np.minimum(1.0, b / cc), 0.0)
        q = (gt + np.clip(theta, 0.0, 1.0) * at) * frac
        return np.where(pos, q, allocation_ceiling(self.agent))

    def weight(self, q):
        seg = np.clip(np.searchsorted(self.hq, q, side="left") - 1, 0, self.slopes.size - 1)
        return self.slopes[seg]

    def threshold_index(self, wc, strict):
        """Number of leading hull segments whose slope beats the competitor."""
        neg = -self.slopes
        return np.where(strict, np.searchsorted(neg, -wc, side="left"),
                        np.searchsorted(neg, -wc, side="right"))


def _groups(env: Environment):
    if isinstance(env, KUnit):
        return [(list(range(env.n)), env.k)]
    if isinstance(env, Partition):
        return [(list(b), c) for b, c in zip(env.blocks, env.caps)]
    return None


def _mpm_block_uniform(magents, groups, objective, rng, size):
    """Vectorized MPM for k-unit and partition environments (top-``c`` per group)."""
    agents = [m.agent for m in magents]
    n = len(agents)
    vals, buds = _draw_types(agents, rng, size)
    us = rng.random((n, size))
    Q = np.stack([m.quantile(vals[i], buds[i], us[i]) for i, m in enumerate(magents)])
    W = np.stack([m.weight(Q[i]) for i, m in enumerate(magents)])
    payoff = np.zeros(size)
    wins = np.zeros(n)
    cols = np.arange(size)
    for members_, cap in groups:
        g = len(members_)
        idx = np.array(members_)
        Wg = W[idx]
        order = np.argsort(-Wg, axis=0, kind="stable")  # ties: lower index first
        rank = np.empty_like(order)
        rank[order, cols[None, :]] = np.arange(g)[:, None]
        winner = (rank < cap) & (Wg > 0)
        for r, i in enumerate(members_):
            pos = np.where(rank[r] < cap, cap, cap - 1)
            has = pos < g
            ps = np.minimum(pos, g - 1)
            j_local = order[ps, cols]
            wc = np.where(has, Wg[j_local, cols], 0.0)
            jc = np.where(has, idx[j_local], n)
            strict = (wc <= 0) | (jc < i)
            wc = np.maximum(wc, 0.0)
            m = magents[i]
            cnt = m.threshold_index(wc, strict)
            price = m.price[cnt]
            x = _lottery(vals[i], buds[i], price, m.tie[cnt])
            if objective == "revenue":
                payoff += price * x
            else:
                payoff += vals[i] * winner[r]
            wins[i] += winner[r].sum()
    return _block_stats(payoff, wins)


def _greedy(weights, env: Environment) -> int:
    mask = 0
    for i in sorted(range(len(weights)), key=lambda i: (-weights[i], i)):
        if weights[i] <= 0:
            break
        if env.is_independent(mask | (1 << i)):
            mask |= 1 << i
    return mask


def _mpm_block_general(magents, env, objective, rng, size):
    agents = [m.agent for m in magents]
    n = len(agents)
    vals, buds = _draw_types(agents, rng, size)
    us = rng.random((n, size))
    Q = np.stack([m.quantile(vals[i], buds[i], us[i]) for i, m in enumerate(magents)])
    W = np.stack([m.weight(Q[i]) for i, m in enumerate(magents)])
    payoff = np.zeros(size)
    wins = np.zeros(n)
    for s in range(size):
        w = W[:, s].tolist()
        win = _greedy(w, env)
        for i, m in enumerate(magents):
            lo, hi = 0, m.slopes.size  # largest count c with i winning at slope c-1
            while lo < hi:
                mid = (lo + hi + 1) // 2
                w2 = list(w)
                w2[i] = float(m.slopes[mid - 1])
                if _greedy(w2, env) >> i & 1:
                    lo = mid
                else:
                    hi = mid - 1
            won = bool(win >> i & 1)
            wins[i] += won
            if objective == "revenue":
                x = _lottery(vals[i, s], buds[i, s], m.price[lo], m.tie[lo])
                payoff[s] += m.price[lo] * x
            elif won:
                payoff[s] += vals[i, s]
    return _block_stats(payoff, wins)


def mpm_run(agents: Sequence[Agent], env: Environment, objective: str = "revenue",
            samples: int = 100_000, seed: int = 0, hulls: Sequence[ConcaveCurve] | None = None,
            m: int = POSTING_GRID, threads: int | None = None) -> SimResult:
    """Pricing-based marginal payoff mechanism.

    Each type is mapped to a random quantile through ``H(q) = x^q(t)``,
    winners maximize the sum of ironed virtual values, and every agent pays
    ``p(qhat) x^{qhat}(t)`` for its critical quantile ``qhat``.  The critical
    quantile is always a hull breakpoint, so it is found exactly.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if len(agents) != env.n:
        raise ValueError(f"{len(agents)} agents for an environment on {env.n}")
    hulls = list(hulls) if hulls is not None else posting_hulls(agents, objective, m)
    magents = [_MpmAgent.build(a, h) for a, h in zip(agents, hulls)]
    groups = _groups(env)
    if groups is not None:
        fn = lambda rng, size: _mpm_block_uniform(magents, groups, objective, rng, size)
    else:
        fn = lambda rng, size: _mpm_block_general(magents, env, objective, rng, size)
    parts = seeded_blocks(fn, samples, seed, STREAM_MPM, threads)
    return _result("mpm", objective, parts, seed)


# ---------------------------------------------------------------------------
# decomposition verifiers


@dataclass(frozen=True)
class DecompositionReport:
    objective: str
    q: float
    price: float
    branch: str
    terms: dict
    bounds: dict
    checks: dict
    exante_allocation: float
    atom_slack: float = 0.0

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def margins(self) -> dict:
        return {k: self.bounds[k] - self.terms[k] for k in self.bounds if k in self.terms}


def _mechanism(agent: Agent, q: float, objective: str, result, taus):
    """``(taus, X, P)`` for the mechanism EX.

    From an LP solution each type keeps its own ``(x, p)``; from a bare
    tau-family each type takes its largest utility-maximizing choice.
    """
    if result is None and taus is None:
        result = RelaxedExAnteLp(agent, objective).solve(q)
    if result is not None:
        return tau_family(result), result.x, result.p
    taus = list(taus)
    X, P = evaluate_taus(agent, taus)
    return taus, X, P


def _value(agent: Agent, X, P, objective: str) -> float:
    w = type_weights(agent)
    if objective == "revenue":
        return float((w * P).sum())
    return float((w * agent.value.support[:, None] * X).sum())


def _truncated(taus, X, cuts):
    """EX': each type keeps ``min(x, x*_b)``, still a best response once larger allocations are removed."""
    Xp = np.minimum(X, np.asarray(cuts)[None, :])
    Pp = np.column_stack([t(Xp[:, j]) for j, t in enumerate(taus)])
    return Xp, Pp


def _window_choice(agent: Agent, taus, lo, hi=None):
    """Largest best response to ``tau_b(lo_b + y) - tau_b(lo_b)`` on the window."""
    wins = [t.window(a, t.x_max if hi is None else b) for t, a, b in
            zip(taus, lo, hi if hi is not None else [None] * len(taus))]
    return evaluate_taus(agent, wins)


def _posting_runmax(agent: Agent, q: float, objective: str, m: int) -> tuple[float, float]:
    """``P(q)`` at the clearing offer and ``max_{q' <= q} P(q')`` over a fine grid."""
    at_q = float(offer_payoff(agent, clearing_offers(agent, q), objective)[0])
    curve = price_posting_curve(agent, objective, m)
    below = curve.values[curve.q <= q + 1e-12]
    return at_q, max(at_q, float(below.max()) if below.size else 0.0)


def _atom_slack(agent: Agent, q: float) -> float:
    """Welfare EX' may beat ``W(q)`` only through a value atom at the clearing price.

    With tie ``theta`` at the atom, ex ante feasibility lets types above the
    atom gain at most ``theta Pr[v = p] E[min(1, b/p)]`` of allocation over
    market clearing, each unit worth at most ``E[v | v > p] - p`` more than
    the atom's share it displaces.  Zero for atomless clearing prices.
    """
    off = clearing_offers(agent, q)
    p, theta = float(off.price[0]), float(off.tie[0])
    if not 0.0 < theta < 1.0:
        return 0.0
    gt, at, v_gt = _value_terms(agent, p)
    if at <= 0 or gt <= 1e-12:
        return 0.0
    frac, _ = _budget_terms(agent, p)
    return max(0.0, float((v_gt / gt - p) * theta * at * frac))


def decompose_welfare(agent: Agent, q: float, result: ExAnteLpResult | None = None,
                      taus: Sequence[AllocationPaymentFunction] | None = None,
                      slack: float = DECOMP_TOL, m: int = POSTING_GRID) -> DecompositionReport:
    """Split each ``tau_b`` at ``x*_b``, the largest allocation with marginal price at most ``p(q)``."""
    taus, X, P = _mechanism(agent, q, "welfare", result, taus)
    p_hat = float(clearing_offers(agent, q).price[0])
    xs = [t.argmax_slope_below(p_hat) for t in taus]
    ex = _value(agent, X, P, "welfare")
    ex1 = _value(agent, *_truncated(taus, X, xs), "welfare")
    ex2 = _value(agent, *_window_choice(agent, taus, xs), "welfare")
    W_q, _ = _posting_runmax(agent, q, "welfare", m)
    atom = _atom_slack(agent, q)
    terms = {"ex": ex, "ex_prime": ex1, "ex_double_prime": ex2}
    bounds = {"ex": ex1 + ex2 + slack, "ex_prime": W_q + atom + slack,
              "ex_double_prime": W_q + slack}
    checks = {k: terms[k] <= bounds[k] for k in bounds}
    alloc = float((type_weights(agent) * X).sum())
    return DecompositionReport("welfare", float(q), p_hat, "welfare", terms, bounds, checks,
                               alloc, atom)


def decompose_revenue(agent: Agent, q: float, result: ExAnteLpResult | None = None,
                      taus: Sequence[AllocationPaymentFunction] | None = None,
                      kappa: float | None = None, slack: float = DECOMP_TOL,
                      m: int = POSTING_GRID) -> DecompositionReport:
    """Three-way split of each ``tau_b`` at ``x*_b`` (clearing price) and ``x#_b`` (expected budget).

    When the clearing price is at least the expected budget only the total
    is checked, against ``(2 + kappa - 1/kappa) P(q)``.
    """
    taus, X, P = _mechanism(agent, q, "revenue", result, taus)
    kappa = kappa_of(agent.budget) if kappa is None else kappa
    b_star = agent.budget.mean()
    p_hat = float(clearing_offers(agent, q).price[0])
    xs = [t.argmax_slope_below(p_hat) for t in taus]
    xh = [max(t.argmax_slope_below(b_star), x) for t, x in zip(taus, xs)]
    ex = _value(agent, X, P, "revenue")
    ex1 = _value(agent, *_truncated(taus, X, xs), "revenue")
    ex3 = _value(agent, *_window_choice(agent, taus, xs, xh), "revenue")
    ex2 = _value(agent, *_window_choice(agent, taus, xh), "revenue")
    P_q, P_run = _posting_runmax(agent, q, "revenue", m)
    terms = {"ex": ex, "ex_prime": ex1, "ex_triple_prime": ex3, "ex_double_prime": ex2}
    if p_hat >= b_star:
        branch = "clearing-price-above-mean-budget"
        bounds = {"ex": min(ex1 + ex2 + ex3, (2 + kappa - 1 / kappa) * P_q) + slack}
    else:
        branch = "clearing-price-below-mean-budget"
        bounds = {
            "ex": ex1 + ex2 + ex3 + slack,
            "ex_prime": P_q + slack,
            "ex_double_prime": (1 + kappa - 1 / kappa) * P_run + slack,
            "ex_triple_prime": (2 * kappa - 1) * P_run + slack,
        }
    checks = {k: terms[k] <= bounds[k] for k in bounds}
    alloc = float((type_weights(agent) * X).sum())
    return DecompositionReport("revenue", float(q), p_hat, branch, terms, bounds, checks, alloc)
