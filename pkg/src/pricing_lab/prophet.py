"""Prophet-inequality thresholds, gambler simulations, and the correlated
ex ante prophet construction."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .curves import ConcaveCurve
from .dist import Agent, DiscreteDist, demand, sample
from .envs import (
    EXHAUSTIVE_N,
    Environment,
    KUnit,
    Partition,
    UnsupportedEnvironmentError,
    ear_decomposition,
    ear_optimize,
)
from .mech import SimResult, _block_stats, _result, _Served, posting_hulls
from .parallel import block_rng, seeded_blocks

FIXED_POINT_TOL = 1e-9
MIN_BATCH = 100
DEFAULT_BATCH = 2000
STREAM_GAMBLER = 4
STREAM_BATCH = 5
STREAM_CORRELATED = 6


class ConfigurationError(ValueError):
    pass


def excess_mean(dist: DiscreteDist, t: float) -> float:
    """``E[(v - t)^+]``."""
    return float(np.maximum(dist.support - t, 0.0) @ dist.probs)


def kunit_threshold(agents: Sequence[Agent], k: int = 1) -> float:
    """``theta = b*/k`` where ``b* = sum_i E[(v_i - b*/k)^+]``.

    The left side grows and the right side shrinks in ``b``, so the root is
    unique; it is bracketed in ``[0, sum_i E v_i]``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    dists = [a.value for a in agents]
    total = sum(d.mean() for d in dists)
    if total <= 0:
        return 0.0
    gap = lambda b: b - sum(excess_mean(d, b / k) for d in dists)
    b = brentq(gap, 0.0, total, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(gap(b)) > FIXED_POINT_TOL:
        raise ArithmeticError(f"fixed-point residual {gap(b):.3g} above tolerance")
    return b / k


def prophet_upper_bound(agents: Sequence[Agent], k: int, theta: float) -> float:
    """``k theta + sum_i E[(v_i - theta)^+]``, an upper bound on the ex ante welfare."""
    return k * theta + sum(excess_mean(a.value, theta) for a in agents)


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class AnonymousThreshold:
    theta: float
    kind = "anonymous"

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("threshold must be nonnegative")


class _Batch:
    """Fixed ``v'`` batch with its max-weight bases, shared by a whole trajectory."""

    def __init__(self, agents: Sequence[Agent], env: Environment, size: int, seed: int):
        if env.n > EXHAUSTIVE_N:
            raise UnsupportedEnvironmentError(f"adaptive thresholds need n <= {EXHAUSTIVE_N}")
        rng = block_rng(seed, 0, STREAM_BATCH)
        self.env = env
        self.table = env.independent_table
        self.v = np.stack([sample(a.value, rng, size) for a in agents], axis=1)  # (size, n)
        # decreasing v', ties by index
        self.order = np.argsort(-self.v, axis=1, kind="stable")
        self.rows = np.arange(size)
        self.basis = self._greedy(np.zeros(size, dtype=np.int64), np.full(size, -1, dtype=np.int64))

    def _greedy(self, fixed, allowed):
        """Greedy scan over ``allowed`` elements keeping ``fixed | chosen`` independent."""
        chosen = np.zeros_like(fixed)
        for t in range(self.order.shape[1]):
            e = self.order[:, t]
            bit = np.left_shift(1, e)
            cand = ((allowed & bit) != 0) & ((fixed & bit) == 0)
            ok = cand & self.table[fixed | chosen | bit]
            chosen |= np.where(ok, bit, 0)
        return chosen

    def remainder(self, A: int) -> np.ndarray:
        """``R(A)``: greedy completion of ``A`` from ``B \\ A``."""
        fixed = np.full(self.v.shape[0], A, dtype=np.int64)
        return self._greedy(fixed, self.basis & ~A)

    def masked_sum(self, masks: np.ndarray) -> np.ndarray:
        bits = (masks[:, None] >> np.arange(self.v.shape[1])) & 1
        return (self.v * bits).sum(axis=1)

    def c_value(self, A: int) -> np.ndarray:
        """Per-sample ``sum_{C(A)} v'`` with ``C(A) = B \\ R(A)``."""
        return self.masked_sum(self.basis & ~self.remainder(A))

    def r_value(self, A: int) -> np.ndarray:
        return self.masked_sum(self.remainder(A))


@dataclass(eq=False)
class AdaptiveThresholds:
    """2-balanced adaptive thresholds ``theta_i(A) = (E C(A + i) - E C(A)) / 2``.

    Estimates use one fixed ``v'`` batch (common random numbers) and are
    memoized per accepted set.  The ``R``-difference form is logged too.
    """

    batch: _Batch
    kind = "adaptive"
    _c: dict = field(default_factory=dict)
    _r: dict = field(default_factory=dict)
    log: dict = field(default_factory=dict)

    def _cv(self, A):
        if A not in self._c:
            self._c[A] = self.batch.c_value(A)
        return self._c[A]

    def _rv(self, A):
        if A not in self._r:
            self._r[A] = self.batch.r_value(A)
        return self._r[A]

    def threshold(self, i: int, A: int) -> float:
        key = (i, A)
        if key not in self.log:
            diff = self._cv(A | (1 << i)) - self._cv(A)
            rdiff = self._rv(A) - self._rv(A | (1 << i))
            se = float(diff.std(ddof=1) / np.sqrt(diff.size)) / 2 if diff.size > 1 else 0.0
            self.log[key] = {"theta": 0.5 * float(diff.mean()), "se": se,
                             "theta_r_form": 0.5 * float(rdiff.mean())}
        return self.log[key]["theta"]

    def expected_c(self, A: int) -> float:
        return float(self._cv(A).mean())


def matroid_adaptive_thresholds(agents: Sequence[Agent], env: Environment,
                                batch: int = DEFAULT_BATCH, seed: int = 0) -> AdaptiveThresholds:
    if batch < MIN_BATCH:
        raise ConfigurationError(f"v' batch must hold at least {MIN_BATCH} samples")
    if len(agents) != env.n:
        raise ValueError(f"{len(agents)} agents for an environment on {env.n}")
    return AdaptiveThresholds(_Batch(agents, env, batch, seed))


def best_completion(values: Sequence[float], env: Environment, basis: int, A: int) -> float:
    """Exhaustive value-maximizing completion of ``A`` inside ``basis \\ A`` (audit helper)."""
    pool = [i for i in range(env.n) if (basis >> i) & 1 and not (A >> i) & 1]
    best = 0.0
    for r in range(len(pool) + 1):
        for combo in itertools.combinations(pool, r):
            m = A
            for i in combo:
                m |= 1 << i
            if env.is_independent(m):
                best = max(best, sum(values[i] for i in combo))
    return best


# ---------------------------------------------------------------------------
# gambler


def _gambler_block(agents, env, policy, rng, size):
    n = len(agents)
    vals = np.stack([sample(a.value, rng, size) for a in agents])
    state = _Served(env, size)
    payoff = np.zeros(size)
    taken = np.zeros(n)
    accepted = np.zeros(size, dtype=np.int64)
    for i in range(n):
        if policy.kind == "anonymous":
            theta = policy.theta
        else:
            theta = np.zeros(size)
            for A in np.unique(accepted):
                theta[accepted == A] = policy.threshold(i, int(A))
        got = (vals[i] >= theta) & state.can_add(i)
        payoff += vals[i] * got
        state.add(i, got)
        accepted |= np.where(got, 1 << i, 0)
        taken[i] = got.sum()
    return _block_stats(payoff, taken)


def gambler_simulate(agents: Sequence[Agent], env: Environment, policy, samples: int = 100_000,
                     seed: int = 0, threads: int | None = None) -> SimResult:
    """Online selection in index order: accept prize ``i`` iff ``v_i >= theta`` and feasible."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if policy.kind == "anonymous":
        fn = lambda rng, size: _gambler_block(agents, env, policy, rng, size)
        parts = seeded_blocks(fn, samples, seed, STREAM_GAMBLER, threads)
    else:
        # the memo is shared, so blocks run serially; results do not depend on it
        fn = lambda rng, size: _gambler_block(agents, env, policy, rng, size)
        parts = seeded_blocks(fn, samples, seed, STREAM_GAMBLER, 1)
    extras = {"policy": policy.kind}
    if policy.kind == "anonymous":
        extras["theta"] = policy.theta
    return _result("gambler", "welfare", parts, seed, extras)


def welfare_ear(agents: Sequence[Agent], env: Environment, hulls=None, m: int = 1000):
    hulls = list(hulls) if hulls is not None else posting_hulls(agents, "welfare", m)
    return ear_optimize(hulls, env)


# ---------------------------------------------------------------------------
# correlated sampler


@dataclass(frozen=True, eq=False)
class CorrelatedSampler:
    """Draw a feasible set ``S ~ D`` and values from the top (``i in S``) or bottom quantiles."""

    env: Environment
    agents: tuple
    profile: np.ndarray
    decomposition: tuple
    ear: float

    @property
    def sets(self) -> list[frozenset]:
        return [S for S, _ in self.decomposition]

    def sample(self, rng: np.random.Generator, size: int):
        n = len(self.agents)
        probs = np.array([p for _, p in self.decomposition])
        pick = rng.choice(probs.size, size=size, p=probs / probs.sum())
        inside = np.zeros((size, n), dtype=bool)
        for s, (S, _) in enumerate(self.decomposition):
            rows = pick == s
            for i in S:
                inside[rows, i] = True
        u = rng.random((size, n))
        vals = np.empty((size, n))
        for i, a in enumerate(self.agents):
            qi = self.profile[i]
            quant = np.where(inside[:, i], u[:, i] * qi, qi + u[:, i] * (1.0 - qi))
            vals[:, i] = demand(a.value, np.clip(quant, 0.0, 1.0))
        return vals, pick


def offline_optimum(vals: np.ndarray, env: Environment) -> np.ndarray:
    """Max-weight feasible set value per row (k-unit and partition matroids)."""
    if isinstance(env, KUnit):
        groups = [(list(range(env.n)), env.k)]
    elif isinstance(env, Partition):
        groups = [(list(b), c) for b, c in zip(env.blocks, env.caps)]
    else:
        raise UnsupportedEnvironmentError("offline optimum implemented for k-unit and partition")
    out = np.zeros(vals.shape[0])
    for g, c in groups:
        top = -np.sort(-np.maximum(vals[:, g], 0.0), axis=1)
        out += top[:, :c].sum(axis=1)
    return out


def build_correlated_sampler(agents: Sequence[Agent], env: Environment,
                             hulls: Sequence[ConcaveCurve] | None = None,
                             m: int = 1000) -> CorrelatedSampler:
    if not isinstance(env, (KUnit, Partition)):
        raise UnsupportedEnvironmentError("correlated sampler supports k-unit and partition matroids")
    ear = welfare_ear(agents, env, hulls, m)
    profile = np.clip(ear.profile, 0.0, 1.0)
    decomposition = tuple(ear_decomposition(env, profile))
    return CorrelatedSampler(env, tuple(agents), profile, decomposition, ear.value)


def correlated_prophet_value(sampler: CorrelatedSampler, samples: int = 100_000, seed: int = 0,
                             threads: int | None = None) -> SimResult:
    def fn(rng, size):
        vals, _ = sampler.sample(rng, size)
        return _block_stats(offline_optimum(vals, sampler.env), np.zeros(len(sampler.agents)))

    parts = seeded_blocks(fn, samples, seed, STREAM_CORRELATED, threads)
    return _result("correlated-prophet", "welfare", parts, seed, {"ear": sampler.ear})
