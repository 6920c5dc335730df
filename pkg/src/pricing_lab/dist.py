"""Value and budget distributions in value space and quantile space.

Everything downstream works on :class:`DiscreteDist`; the parametric
families exist only to be discretized onto a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

import numpy as np

PROB_TOL = 1e-12
# budget sentinel for linear agents, relative to the top of the value support
INFINITE_BUDGET_FACTOR = 10.0
DEFAULT_GRID = 50

UTILITIES = ("linear", "public-budget", "private-budget")


class ParameterError(ValueError):
    """Invalid distribution or agent parameters."""


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Finite distribution on an ascending support.

    Parameters
    ----------
    support : array_like
        Strictly ascending, nonnegative atoms.
    probs : array_like
        Atom masses; nonnegative and summing to one.
    """

    support: np.ndarray
    probs: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        support = np.ascontiguousarray(self.support, dtype=np.float64).reshape(-1)
        probs = np.ascontiguousarray(self.probs, dtype=np.float64).reshape(-1)
        if support.shape != probs.shape or support.size == 0:
            raise ParameterError("support and probs must be nonempty and of equal length")
        if np.any(np.diff(support) <= 0):
            raise ParameterError("support must be strictly ascending")
        if support[0] < 0 or not np.all(np.isfinite(support)):
            raise ParameterError("support must be finite and nonnegative")
        if np.any(probs < 0):
            raise ParameterError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL * max(1, probs.size):
            raise ParameterError(f"probabilities sum to {probs.sum()!r}, not 1")
        support.setflags(write=False)
        probs.setflags(write=False)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def from_atoms(cls, values, probs) -> "DiscreteDist":
        """Build from unsorted atoms, merging duplicates and dropping zero mass."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        probs = np.asarray(probs, dtype=np.float64).reshape(-1)
        keep = probs > 0
        uniq, inv = np.unique(values[keep], return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inv, probs[keep])
        return cls(uniq, merged / merged.sum())

    @classmethod
    def point_mass(cls, v: float) -> "DiscreteDist":
        return cls([float(v)], [1.0])

    def __len__(self) -> int:
        return self.support.size

    def __repr__(self) -> str:
        return f"DiscreteDist(atoms={self.support.size}, mean={self.mean():.6g})"

    @property
    def max(self) -> float:
        return float(self.support[-1])

    @property
    def min(self) -> float:
        return float(self.support[0])

    def mean(self) -> float:
        return float(self.support @ self.probs)

    def cdf(self, v):
        """Right-continuous CDF ``Pr[X <= v]``."""
        idx = np.searchsorted(self.support, v, side="right")
        out = np.where(idx > 0, self._cdf[np.maximum(idx - 1, 0)], 0.0)
        return out if np.ndim(v) else float(out)

    def tail(self, v):
        """``Pr[X >= v]``."""
        idx = np.searchsorted(self.support, v, side="left")
        out = np.where(idx > 0, 1.0 - self._cdf[np.maximum(idx - 1, 0)], 1.0)
        return out if np.ndim(v) else float(out)

    def scaled(self, c: float) -> "DiscreteDist":
        if c <= 0:
            raise ParameterError("scale factor must be positive")
        return DiscreteDist(self.support * c, self.probs)

    def atom_quantiles(self) -> np.ndarray:
        """Quantile ``Pr[X >= v_j]`` at the low-value end of each atom."""
        return np.concatenate(([1.0], 1.0 - self._cdf[:-1]))


def quantile_of_value(dist: DiscreteDist, v):
    """Quantile ``q(v) = 1 - F(v)``: mass strictly above ``v``.

    Values off the support clamp naturally to 1 (below) or 0 (above).
    """
    if np.any(np.asarray(v) < 0):
        raise ParameterError("value must be nonnegative")
    out = 1.0 - np.asarray(dist.cdf(v))
    out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(v) else float(out)


def demand(dist: DiscreteDist, q):
    """Demand ``V(q) = F^{-1}(1 - q)``, the smallest ``v`` with ``F(v) >= 1 - q``.

    A quantile inside an atom maps to that atom's value.
    """
    qa = np.asarray(q, dtype=np.float64)
    if np.any((qa < 0) | (qa > 1)):
        raise ParameterError("quantile must lie in [0, 1]")
    # tolerance absorbs cumulative-sum rounding at atom boundaries
    target = 1.0 - qa - 1e-13
    idx = np.searchsorted(dist._cdf, target, side="left")
    idx = np.minimum(idx, dist.support.size - 1)
    out = dist.support[idx]
    return out if np.ndim(q) else float(out)


def sample(dist: DiscreteDist, rng: np.random.Generator, size=None):
    """Inverse-CDF draws; only ``rng`` is mutated."""
    u = rng.random(size)
    idx = np.searchsorted(dist._cdf, u, side="right")
    idx = np.minimum(idx, dist.support.size - 1)
    out = dist.support[idx]
    return out if size is not None else float(out)


# ---------------------------------------------------------------------------
# parametric families


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0
    family = "uniform"

    def __post_init__(self):
        if not (0 <= self.lo < self.hi) or not math.isfinite(self.hi):
            raise ParameterError(f"uniform needs 0 <= lo < hi, got ({self.lo}, {self.hi})")

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def regular(self) -> bool:
        return True

    def to_record(self) -> dict:
        return {"family": self.family, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PointMass:
    v: float
    family = "point-mass"

    def __post_init__(self):
        if not (self.v >= 0 and math.isfinite(self.v)):
            raise ParameterError(f"point mass needs a finite nonnegative value, got {self.v}")

    def ppf(self, u):
        return np.full(np.shape(u), float(self.v))

    def mean(self) -> float:
        return float(self.v)

    @property
    def regular(self) -> bool:
        return True

    def to_record(self) -> dict:
        return {"family": self.family, "v": self.v}


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0
    family = "exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ParameterError(f"exponential needs rate > 0, got {self.rate}")

    def ppf(self, u):
        return -np.log1p(-np.asarray(u)) / self.rate

    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def regular(self) -> bool:
        return True

    def to_record(self) -> dict:
        return {"family": self.family, "rate": self.rate}


@dataclass(frozen=True)
class EqualRevenue:
    """Equal-revenue law ``Pr[v >= x] = v_min / x`` truncated with an atom at ``v_max``."""

    v_min: float = 1.0
    v_max: float = 10.0
    family = "equal-revenue"

    def __post_init__(self):
        if not (0 < self.v_min < self.v_max) or not math.isfinite(self.v_max):
            raise ParameterError(
                f"equal-revenue needs 0 < v_min < v_max, got ({self.v_min}, {self.v_max})"
            )

    def ppf(self, u):
        u = np.asarray(u, dtype=np.float64)
        with np.errstate(divide="ignore"):
            v = self.v_min / (1.0 - u)
        return np.minimum(v, self.v_max)

    def mean(self) -> float:
        return self.v_min * (1.0 + math.log(self.v_max / self.v_min))

    @property
    def regular(self) -> bool:
        return True

    def to_record(self) -> dict:
        return {"family": self.family, "v_min": self.v_min, "v_max": self.v_max}


@dataclass(frozen=True)
class Explicit:
    dist: DiscreteDist
    family = "explicit"

    @property
    def regular(self) -> bool:
        # revenue points (Pr[v >= v_j], v_j Pr[v >= v_j]) must be concave
        q = self.dist.atom_quantiles()[::-1]
        r = q * self.dist.support[::-1]
        q = np.concatenate(([0.0], q))
        r = np.concatenate(([0.0], r))
        slopes = np.diff(r) / np.maximum(np.diff(q), 1e-300)
        return bool(np.all(np.diff(slopes) <= 1e-12))

    def mean(self) -> float:
        return self.dist.mean()

    def to_record(self) -> dict:
        return {
            "family": self.family,
            "support": self.dist.support.tolist(),
            "probs": self.dist.probs.tolist(),
        }


ParametricDist = Union[Uniform, PointMass, Exponential, EqualRevenue, Explicit]


def parametric_from_record(rec: Mapping[str, Any]) -> ParametricDist:
    """Parse a tagged record such as ``{"family": "uniform", "lo": 0, "hi": 1}``."""
    rec = dict(rec)
    fam = rec.pop("family", None)
    try:
        if fam == "uniform":
            return Uniform(float(rec.get("lo", 0.0)), float(rec.get("hi", 1.0)))
        if fam == "point-mass":
            return PointMass(float(rec["v"]))
        if fam == "exponential":
            return Exponential(float(rec.get("rate", 1.0)))
        if fam == "equal-revenue":
            return EqualRevenue(float(rec["v_min"]), float(rec["v_max"]))
        if fam == "explicit":
            return Explicit(DiscreteDist(rec["support"], rec["probs"]))
    except KeyError as exc:
        raise ParameterError(f"{fam}: missing field {exc.args[0]!r}") from None
    raise ParameterError(f"unknown distribution family {fam!r}")


def discretize(p: ParametricDist, m: int = DEFAULT_GRID) -> DiscreteDist:
    """Midpoint-rule discretization into ``m`` equiprobable atoms.

    Atoms sit at the inverse CDF of the quantile midpoints ``(j - 1/2)/m``;
    coinciding atoms (point masses, truncation caps) are merged.
    """
    if m < 2:
        raise ParameterError("grid size must be at least 2")
    if isinstance(p, Explicit):
        return p.dist
    if isinstance(p, PointMass):
        return DiscreteDist.point_mass(p.v)
    u = (np.arange(m) + 0.5) / m
    return DiscreteDist.from_atoms(p.ppf(u), np.full(m, 1.0 / m))


# ---------------------------------------------------------------------------
# agents


@dataclass(frozen=True, eq=False)
class Agent:
    """Discretized agent: independent value and budget distributions.

    Linear agents carry a point-mass budget at a sentinel level far above
    every value, so ``min(1, b/p) = 1`` at every relevant price.
    """

    value: DiscreteDist
    budget: DiscreteDist
    utility: str = "private-budget"
    regular_value: bool = False

    def __post_init__(self):
        if self.utility not in UTILITIES:
            raise ParameterError(f"unknown utility {self.utility!r}")
        if self.utility != "private-budget" and len(self.budget) != 1:
            raise ParameterError(f"{self.utility} agent needs a point-mass budget")

    @classmethod
    def linear(cls, value: DiscreteDist, regular_value: bool = False) -> "Agent":
        top = max(value.max, 1e-12)
        return cls(
            value,
            DiscreteDist.point_mass(INFINITE_BUDGET_FACTOR * top),
            "linear",
            regular_value,
        )

    @classmethod
    def public(cls, value: DiscreteDist, b: float, regular_value: bool = False) -> "Agent":
        return cls(value, DiscreteDist.point_mass(b), "public-budget", regular_value)

    def scaled(self, c: float) -> "Agent":
        return Agent(self.value.scaled(c), self.budget.scaled(c), self.utility, self.regular_value)

    @property
    def is_linear(self) -> bool:
        return self.utility == "linear"


@dataclass(frozen=True)
class AgentModel:
    """Parametric agent description; :meth:`discretize` yields an :class:`Agent`."""

    value: ParametricDist
    budget: ParametricDist | None = None
    utility: str = "private-budget"

    def __post_init__(self):
        if self.utility not in UTILITIES:
            raise ParameterError(f"unknown utility {self.utility!r}")
        if self.utility == "private-budget" and self.budget is None:
            raise ParameterError("private-budget agent needs a budget distribution")
        if self.utility == "public-budget" and not isinstance(self.budget, PointMass):
            raise ParameterError("public-budget agent needs a point-mass budget")

    def discretize(self, m_value: int = DEFAULT_GRID, m_budget: int | None = None) -> Agent:
        value = discretize(self.value, m_value)
        regular = bool(self.value.regular)
        if self.utility == "linear":
            return Agent.linear(value, regular)
        if self.utility == "public-budget":
            return Agent.public(value, self.budget.v, regular)
        budget = discretize(self.budget, m_budget or m_value)
        return Agent(value, budget, "private-budget", regular)

    def to_record(self) -> dict:
        rec = {"utility": self.utility, "value": self.value.to_record()}
        if self.budget is not None:
            rec["budget"] = self.budget.to_record()
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "AgentModel":
        budget = rec.get("budget")
        utility = rec.get("utility", "private-budget" if budget else "linear")
        if utility == "public-budget" and isinstance(budget, (int, float)):
            budget = {"family": "point-mass", "v": budget}
        return cls(
            parametric_from_record(rec["value"]),
            parametric_from_record(budget) if budget is not None else None,
            utility,
        )
