import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pricing_lab.curves import concave_hull, price_posting_curve
from pricing_lab.dist import Agent, AgentModel, DiscreteDist, Exponential, PointMass, Uniform
from pricing_lab.exante import (
    AllocationPaymentFunction,
    InfeasibleQuantileError,
    MenuMechanism,
    RelaxedExAnteLp,
    SizeError,
    brute_force_exante,
    closeness,
    exante_curve,
    exante_private_budget_lp,
    exante_public_budget,
    kappa_of,
    tau_family,
)

from conftest import random_dist, random_private_agent

TWO = DiscreteDist([1.0, 2.0], [0.5, 0.5])


def test_two_menu_linear_collapses_to_price(linear_uniform):
    val, menu = exante_public_budget(linear_uniform, 0.5, "revenue")
    assert val == pytest.approx(0.25, abs=1e-3)
    assert len(menu.options) == 1
    x, p = menu.options[0]
    assert x == pytest.approx(1.0) and p == pytest.approx(0.5, abs=1e-3)


def test_two_menu_budget_example():
    # selling surely forces both types to allocation 1, hence one price <= 1
    agent = Agent.public(TWO, 1.5)
    val, menu = exante_public_budget(agent, 1.0, "revenue")
    assert val == pytest.approx(1.0, abs=1e-9)
    assert len(menu.options) <= 2
    # the menu {(0.5, 0.5), (1, 1.5)} sells with probability 0.75, not 1
    m = MenuMechanism(((0.5, 0.5), (1.0, 1.5)))
    picks = [m.choose(v, 1.5) for v in TWO.support]
    assert sum(0.5 * x for x, _ in picks) == pytest.approx(0.75)
    assert sum(0.5 * p for _, p in picks) == pytest.approx(1.0)
    best, _ = exante_public_budget(agent, 0.75, "revenue")
    assert best >= 1.0 - 1e-9


def test_two_menu_grid_oracle():
    # enumerate two-option menus (a, a v1), (1, a v1 + (1 - a) v2) on a 100-point grid
    agent = Agent.public(TWO, 1.5)
    best = 0.0
    for v1 in (1.0, 2.0):
        for v2 in (1.0, 2.0):
            for a in np.linspace(0, 1, 101):
                menu = [(a, a * v1), (1.0, a * v1 + (1 - a) * v2)]
                rev = sol = 0.0
                for v, pr in zip(TWO.support, TWO.probs):
                    choice = max(((x, p) for x, p in menu if p <= 1.5 + 1e-12),
                                 key=lambda o: (v * o[0] - o[1], o[0]), default=(0, 0))
                    if v * choice[0] - choice[1] < -1e-12:
                        choice = (0, 0)
                    rev += pr * choice[1]
                    sol += pr * choice[0]
                if abs(sol - 1.0) < 1e-9:
                    best = max(best, rev)
    assert exante_public_budget(agent, 1.0, "revenue")[0] == pytest.approx(best, abs=1e-9)


def test_two_menu_zero_quantile():
    val, menu = exante_public_budget(Agent.public(TWO, 1.5), 0.0)
    assert val == 0.0 and menu.options == ()


def test_lp_linear_equals_hull(linear_uniform):
    agent = AgentModel(Uniform(0, 1), None, "linear").discretize(50)
    hull = concave_hull(price_posting_curve(agent, "revenue", 50))
    lp = RelaxedExAnteLp(agent, "revenue")
    for q in np.linspace(0.02, 1.0, 12):
        assert lp.solve(q).value == pytest.approx(float(hull.at(q)), abs=1e-4)


def test_lp_matches_brute_force_toy():
    agent = Agent(DiscreteDist([0.4, 1.0], [0.5, 0.5]), DiscreteDist([0.3, 1.0], [0.5, 0.5]))
    for q in (0.25, 0.5, 0.75):
        bf = brute_force_exante(agent, q, "revenue")
        lp = exante_private_budget_lp(agent, q, "revenue").value
        assert lp >= bf.value - 1e-9
        if not bf.upward_binding:
            assert lp == pytest.approx(bf.value, abs=1e-6)


def test_brute_force_examples():
    one = Agent.public(DiscreteDist.point_mass(1.0), 1.0)
    assert brute_force_exante(one, 1.0).value == pytest.approx(1.0)
    lin = Agent.linear(TWO)
    assert brute_force_exante(lin, 0.5).value == pytest.approx(1.0)
    assert brute_force_exante(lin, 1.0).value == pytest.approx(1.0)
    big = Agent(random_dist(np.random.default_rng(0), 5), random_dist(np.random.default_rng(1), 2))
    with pytest.raises(SizeError):
        brute_force_exante(big, 0.5)


def test_quantile_outside_unit_interval():
    agent = Agent(DiscreteDist([0.0, 1.0], [0.5, 0.5]), DiscreteDist([1.0], [1.0]))
    with pytest.raises(InfeasibleQuantileError):
        RelaxedExAnteLp(agent).solve(1.2)
    with pytest.raises(InfeasibleQuantileError):
        exante_public_budget(agent, -0.5)


def test_kappa_examples():
    assert kappa_of(DiscreteDist.point_mass(2.0)) == 1.0
    assert kappa_of(AgentModel(Uniform(0, 1), Uniform(0, 1)).discretize(100).budget) == pytest.approx(2.0)
    e = AgentModel(Uniform(0, 1), Exponential(1.0)).discretize(2000).budget
    assert kappa_of(e) == pytest.approx(math.e, abs=0.02)


def test_closeness_examples():
    lin = AgentModel(Uniform(0, 1), None, "linear").discretize(30)
    rep = closeness(lin, "revenue", 30)
    assert rep.zeta == pytest.approx(1.0, abs=1e-4)
    uu = AgentModel(Uniform(0, 1), Uniform(0, 1)).discretize(20)
    w = closeness(uu, "welfare", 20)
    assert 1 - 1e-6 <= w.zeta <= 2.05 and not w.violated()
    d = w.to_dict()
    assert {"zeta", "bound", "objective", "per_q"} <= d.keys()
    assert set(d["per_q"][0]) == {"q", "A", "Pbar_runmax", "ratio"}


def test_exante_dominates_posting():
    rng = np.random.default_rng(5)
    for _ in range(5):
        agent = random_private_agent(rng, 5, 3)
        for obj in ("revenue", "welfare"):
            A = exante_curve(agent, obj, 20)
            P = price_posting_curve(agent, obj, 20)
            assert np.all(A.values >= P.at(A.q) - 1e-7)
            assert A.values[0] == 0


def test_two_menu_curve_concave():
    agent = AgentModel(Uniform(0, 1), PointMass(0.4), "public-budget").discretize(30)
    A = exante_curve(agent, "revenue", 30)
    assert A.solver == "two-menu"
    assert np.all(np.diff(A.values, 2) <= 1e-9)


def test_menu_and_tau_invariants():
    with pytest.raises(ValueError):
        MenuMechanism(((0.5, 0.6), (1.0, 0.7)))  # marginal price falls
    with pytest.raises(ValueError):
        AllocationPaymentFunction(1.0, [0.0, 0.5, 1.0], [0.0, 0.4, 0.5])
    with pytest.raises(ValueError):
        AllocationPaymentFunction(0.3, [0.0, 1.0], [0.0, 0.5])


@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_tau_family_is_valid(seed, q):
    agent = random_private_agent(np.random.default_rng(seed), 5, 3)
    res = RelaxedExAnteLp(agent, "revenue").solve(q)
    for tau, b in zip(tau_family(res), agent.budget.support):
        assert tau.tau[0] == 0 and tau.x[0] == 0
        assert np.all(np.diff(tau.tau) >= -1e-9)
        assert np.all(np.diff(tau.slopes) >= -1e-7 * np.maximum(1, np.abs(tau.slopes[1:])))
        assert tau.tau[-1] <= b + 1e-7
