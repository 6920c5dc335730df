"""Feasibility environments, the ex ante feasible polytope, and the ex ante relaxation.

Agent sets are handled as Python ``int`` bitmasks internally; public
functions also accept any iterable of agent indices (0-based).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .curves import ConcaveCurve

EXHAUSTIVE_N = 16
AXIOM_EXHAUSTIVE_N = 12
DEFAULT_DELTA = 1.0 / 200
TOL = 1e-9


class MatroidAxiomError(ValueError):
    pass


class InfeasibleProfileError(ValueError):
    pass


class UnsupportedEnvironmentError(ValueError):
    pass


def to_mask(S) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    m = 0
    for i in S:
        m |= 1 << int(i)
    return m


def members(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


class Environment:
    kind = "abstract"
    n: int

    def rank(self, S) -> int:
        raise NotImplementedError

    def is_independent(self, S) -> bool:
        m = to_mask(S)
        return self.rank(m) == bin(m).count("1")

    @property
    def is_matroid(self) -> bool:
        return True

    def to_record(self) -> dict:
        raise NotImplementedError

    @cached_property
    def rank_table(self) -> np.ndarray:
        """Rank of every subset, indexed by bitmask (n <= 16)."""
        if self.n > EXHAUSTIVE_N:
            raise UnsupportedEnvironmentError(f"rank table needs n <= {EXHAUSTIVE_N}")
        return np.array([self.rank(m) for m in range(1 << self.n)], dtype=np.int64)

    @cached_property
    def independent_table(self) -> np.ndarray:
        sizes = np.array([bin(m).count("1") for m in range(1 << self.n)])
        return self.rank_table == sizes

    def full_rank(self) -> int:
        return self.rank((1 << self.n) - 1)


@dataclass(frozen=True, eq=False)
class KUnit(Environment):
    n: int
    k: int
    kind = "k-unit"

    def __post_init__(self):
        if self.n < 1 or self.k < 0:
            raise ValueError("k-unit needs n >= 1 and k >= 0")

    def rank(self, S) -> int:
        return min(bin(to_mask(S)).count("1"), self.k)

    def to_record(self) -> dict:
        return {"kind": self.kind, "n": self.n, "k": self.k}


@dataclass(frozen=True, eq=False)
class Partition(Environment):
    blocks: tuple
    caps: tuple
    kind = "partition"

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        caps = tuple(int(c) for c in self.caps)
        if len(blocks) != len(caps):
            raise ValueError("one capacity per block")
        flat = sorted(i for b in blocks for i in b)
        if flat != list(range(len(flat))):
            raise ValueError("blocks must partition 0..n-1")
        if any(c < 0 for c in caps):
            raise ValueError("capacities must be nonnegative")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "_masks", tuple(to_mask(b) for b in blocks))

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def rank(self, S) -> int:
        m = to_mask(S)
        return sum(min(bin(m & bm).count("1"), c) for bm, c in zip(self._masks, self.caps))

    def to_record(self) -> dict:
        return {"kind": self.kind, "blocks": [list(b) for b in self.blocks], "caps": list(self.caps)}


@dataclass(frozen=True, eq=False)
class Graphic(Environment):
    """Graphic matroid: agents are edges; independent sets are forests."""

    edges: tuple
    kind = "graphic"

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        if not edges:
            raise ValueError("graphic matroid needs at least one edge")
        object.__setattr__(self, "edges", edges)

    @property
    def n(self) -> int:
        return len(self.edges)

    def rank(self, S) -> int:
        parent: dict[int, int] = {}

        def find(x):
            while parent.get(x, x) != x:
                parent[x] = parent.get(parent[x], parent[x])
                x = parent[x]
            return x

        r = 0
        for i in members(to_mask(S)):
            a, b = self.edges[i]
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
                r += 1
        return r

    def to_record(self) -> dict:
        return {"kind": self.kind, "edges": [list(e) for e in self.edges]}


@dataclass(frozen=True, eq=False)
class ExplicitMatroid(Environment):
    """Matroid given by its independent sets (tiny ground sets)."""

    n: int
    independent: tuple
    kind = "explicit"

    def __post_init__(self):
        fam = {to_mask(s) for s in self.independent} | {0}
        object.__setattr__(self, "independent", tuple(sorted(fam)))

    def rank(self, S) -> int:
        m = to_mask(S)
        return max(bin(I).count("1") for I in self.independent if I & ~m == 0)

    def to_record(self) -> dict:
        return {"kind": self.kind, "n": self.n,
                "independent": [members(I) for I in self.independent]}


def environment_from_record(rec) -> Environment:
    kind = rec.get("kind")
    if kind == "k-unit":
        return KUnit(int(rec["n"]), int(rec["k"]))
    if kind == "partition":
        return Partition(tuple(rec["blocks"]), tuple(rec["caps"]))
    if kind == "graphic":
        return Graphic(tuple(tuple(e) for e in rec["edges"]))
    if kind == "explicit":
        return ExplicitMatroid(int(rec["n"]), tuple(tuple(s) for s in rec["independent"]))
    raise ValueError(f"unknown environment kind {kind!r}")


def check_rank_axioms(env: Environment, samples: int = 2000, seed: int = 0) -> None:
    """Normalization, unit increase, monotonicity and submodularity of ``rank``.

    Exhaustive over all subset pairs ``(S, S + i)`` for small ground sets,
    sampled otherwise.  Raises :class:`MatroidAxiomError`.
    """
    n = env.n
    if env.rank(0) != 0:
        raise MatroidAxiomError("rank of the empty set must be 0")
    if n <= AXIOM_EXHAUSTIVE_N:
        r = env.rank_table if n <= EXHAUSTIVE_N else None
        masks = range(1 << n)
        rank = (lambda m: int(r[m])) if r is not None else env.rank
    else:
        rng = np.random.default_rng(seed)
        masks = [int(x) for x in rng.integers(0, 1 << min(n, 62), samples)]
        rank = env.rank
    for m in masks:
        rm = rank(m)
        for i in range(n):
            bi = 1 << i
            if m & bi:
                continue
            gain = rank(m | bi) - rm
            if gain not in (0, 1):
                raise MatroidAxiomError(f"adding {i} to {members(m)} changes rank by {gain}")
            for j in range(i + 1, n):
                bj = 1 << j
                if m & bj:
                    continue
                # submodularity: r(S+i) + r(S+j) >= r(S+i+j) + r(S)
                if rank(m | bi) + rank(m | bj) < rank(m | bi | bj) + rm:
                    raise MatroidAxiomError(f"submodularity fails at {members(m)}, {i}, {j}")


def is_feasible(env: Environment, S) -> bool:
    m = to_mask(S)
    if isinstance(env, KUnit):
        return bin(m).count("1") <= env.k
    return env.is_independent(m)


@dataclass(frozen=True)
class Membership:
    ok: bool
    heuristic: bool = False
    worst_set: tuple = ()
    excess: float = 0.0

    def __bool__(self) -> bool:
        return self.ok


def _subset_sums(q: np.ndarray) -> np.ndarray:
    n = q.size
    sums = np.zeros(1 << n)
    for i in range(n):
        step = 1 << i
        sums.reshape(-1, 2 * step)[:, step:] += q[i]
    return sums


def eaf_contains(env: Environment, profile, tol: float = TOL) -> Membership:
    """Whether ``profile`` is a marginal vector of some distribution over feasible sets."""
    q = np.asarray(profile, dtype=np.float64)
    if q.size != env.n:
        raise ValueError(f"profile has {q.size} entries for {env.n} agents")
    if np.any(q < -tol) or np.any(q > 1 + tol):
        return Membership(False, excess=float(max(-q.min(), q.max() - 1)))
    if isinstance(env, KUnit):
        ex = float(q.sum() - env.k)
        return Membership(ex <= tol, worst_set=tuple(range(env.n)), excess=max(ex, 0.0))
    if isinstance(env, Partition):
        worst, worst_b = -math.inf, ()
        for b, c in zip(env.blocks, env.caps):
            ex = float(q[list(b)].sum() - c)
            if ex > worst:
                worst, worst_b = ex, b
        return Membership(worst <= tol, worst_set=tuple(worst_b), excess=max(worst, 0.0))
    if env.n <= EXHAUSTIVE_N:
        ex = _subset_sums(q) - env.rank_table
        k = int(np.argmax(ex))
        return Membership(bool(ex[k] <= tol), worst_set=tuple(members(k)), excess=max(float(ex[k]), 0.0))
    # greedy violation search over prefixes of the sorted profile
    order = np.argsort(-q, kind="stable")
    worst, worst_m, m, s = -math.inf, 0, 0, 0.0
    for i in order:
        m |= 1 << int(i)
        s += q[i]
        ex = s - env.rank(m)
        if ex > worst:
            worst, worst_m = ex, m
    return Membership(worst <= tol, heuristic=True, worst_set=tuple(members(worst_m)),
                      excess=max(float(worst), 0.0))


# ---------------------------------------------------------------------------
# ex ante relaxation


@dataclass(frozen=True, eq=False)
class EarResult:
    value: float
    profile: np.ndarray
    method: str
    lam: float | None = None
    error_bound: float = 0.0
    extras: dict = field(default_factory=dict)


def _segments(h: ConcaveCurve):
    dq = np.diff(h.q)
    return dq, h.slopes


def _water_fill(hulls: Sequence[ConcaveCurve], agents: Sequence[int], cap: float):
    """Exact water-filling over nonnegative-slope hull segments.

    Segments enter by decreasing slope; a tied group that does not fit is
    shared in proportion to segment length, keeping symmetric agents
    symmetric.  Returns per-agent quantiles and the marginal threshold.
    """
    segs = []
    for a in agents:
        dq, sl = _segments(hulls[a])
        for s_idx, (length, slope) in enumerate(zip(dq, sl)):
            if slope >= 0 and length > 0:
                segs.append((-slope, a, s_idx, length))
    segs.sort()
    q = {a: 0.0 for a in agents}
    left = float(cap)
    lam = 0.0
    i = 0
    while i < len(segs) and left > TOL:
        j = i
        while j < len(segs) and abs(segs[j][0] - segs[i][0]) <= 1e-12 * max(1.0, abs(segs[i][0])):
            j += 1
        group = segs[i:j]
        total = sum(s[3] for s in group)
        lam = -segs[i][0]
        frac = min(1.0, left / total)
        for _, a, _, length in group:
            q[a] += frac * length
        left -= frac * total
        i = j
    if left > TOL:
        lam = 0.0
    return q, lam


def ear_optimize(hulls: Sequence[ConcaveCurve], env: Environment,
                 delta: float = DEFAULT_DELTA) -> EarResult:
    """Maximize ``sum_i hull_i(q_i)`` over the ex ante feasible polytope.

    k-unit and partition matroids are solved exactly by water-filling
    (per block for partitions); other matroids use the delta-greedy.
    """
    n = len(hulls)
    if n != env.n:
        raise ValueError(f"{n} hulls for an environment on {env.n} agents")
    if isinstance(env, (KUnit, Partition)):
        groups = [(list(range(n)), env.k)] if isinstance(env, KUnit) else [
            (list(b), c) for b, c in zip(env.blocks, env.caps)]
        q = np.zeros(n)
        lams = []
        for agents, cap in groups:
            qa, lam = _water_fill(hulls, agents, cap)
            for a, x in qa.items():
                q[a] = min(x, 1.0)
            lams.append(lam)
        value = float(sum(h.at(x) for h, x in zip(hulls, q)))
        lam = lams[0] if isinstance(env, KUnit) else None
        return EarResult(value, q, "water-filling", lam, 0.0, {"block_thresholds": lams})
    return _delta_greedy(hulls, env, delta)


def _delta_greedy(hulls, env: Environment, delta: float) -> EarResult:
    n = env.n
    if n > EXHAUSTIVE_N:
        raise UnsupportedEnvironmentError(f"delta-greedy needs n <= {EXHAUSTIVE_N}")
    slack = env.rank_table.astype(np.float64)
    masks = np.arange(1 << n)
    contains = [masks[(masks >> i) & 1 == 1] for i in range(n)]
    q = np.zeros(n)
    while True:
        best_i, best_gain = -1, 0.0
        for i in range(n):
            step = min(delta, 1.0 - q[i])
            if step <= TOL:
                continue
            if slack[contains[i]].min() < step - TOL:
                step = float(slack[contains[i]].min())
                if step <= TOL:
                    continue
            gain = float(hulls[i].at(q[i] + step) - hulls[i].at(q[i]))
            if gain > best_gain + 1e-15:
                best_i, best_gain, best_step = i, gain, step
        if best_i < 0:
            break
        q[best_i] += best_step
        slack[contains[best_i]] -= best_step
    L = max(float(np.max(np.abs(h.slopes))) for h in hulls)
    value = float(sum(h.at(x) for h, x in zip(hulls, q)))
    return EarResult(value, q, "delta-greedy", None, n * delta * L, {"delta": delta})


# ---------------------------------------------------------------------------
# decomposition into feasible sets


def ear_decomposition(env: Environment, profile, tol: float = 1e-9):
    """Distribution over feasible sets with marginals ``profile``.

    Systematic sampling: lay the quantiles end to end (per block for a
    partition matroid), draw one offset ``u`` shared by all blocks, and take
    every agent whose interval holds a point ``u + j``.  Sets are constant
    between the fractional parts of the cumulative sums, so at most
    ``n + 1`` distinct sets arise.
    """
    q = np.clip(np.asarray(profile, dtype=np.float64), 0.0, 1.0)
    if isinstance(env, KUnit):
        groups = [list(range(env.n))]
    elif isinstance(env, Partition):
        groups = [list(b) for b in env.blocks]
    else:
        raise UnsupportedEnvironmentError("decomposition supports k-unit and partition matroids")
    if not eaf_contains(env, q, tol):
        raise InfeasibleProfileError("profile lies outside the ex ante feasible polytope")
    cums = []
    cuts = {0.0, 1.0}
    for g in groups:
        c = np.concatenate(([0.0], np.cumsum(q[g])))
        cums.append(c)
        cuts.update(float(x - math.floor(x)) for x in c)
    cuts = sorted(cuts)
    out: dict[frozenset, float] = {}
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 1e-15:
            continue
        u = 0.5 * (lo + hi)
        S = set()
        for g, c in zip(groups, cums):
            for pos, agent in enumerate(g):
                a, b = c[pos], c[pos + 1]
                j = math.ceil(a - u)
                if u + j < b and b > a:
                    S.add(agent)
        key = frozenset(S)
        out[key] = out.get(key, 0.0) + (hi - lo)
    return sorted(out.items(), key=lambda kv: (sorted(kv[0]), kv[1]))


def decomposition_marginals(n: int, decomposition) -> np.ndarray:
    m = np.zeros(n)
    for S, p in decomposition:
        for i in S:
            m[i] += p
    return m
