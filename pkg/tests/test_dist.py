import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from pricing_lab.dist import (
    Agent,
    AgentModel,
    DiscreteDist,
    EqualRevenue,
    Exponential,
    ParameterError,
    PointMass,
    Uniform,
    demand,
    discretize,
    parametric_from_record,
    quantile_of_value,
    sample,
)

TWO = DiscreteDist([1.0, 2.0], [0.5, 0.5])


def test_rejects_bad_probabilities():
    with pytest.raises(ParameterError):
        DiscreteDist([1.0, 2.0], [0.5, 0.6])
    with pytest.raises(ParameterError):
        DiscreteDist([2.0, 1.0], [0.5, 0.5])
    with pytest.raises(ParameterError):
        DiscreteDist([-1.0, 1.0], [0.5, 0.5])


def test_quantile_of_value_examples():
    u = discretize(Uniform(0, 1), 1000)
    assert quantile_of_value(u, 0.7) == pytest.approx(0.3, abs=1e-3)
    pm = discretize(PointMass(5.0), 10)
    assert quantile_of_value(pm, 4.0) == 1.0
    assert quantile_of_value(pm, 6.0) == 0.0
    assert quantile_of_value(TWO, 1.0) == 0.5


def test_demand_examples():
    u = discretize(Uniform(0, 1), 1000)
    assert demand(u, 0.3) == pytest.approx(0.7, abs=1e-3)
    assert demand(u, 0.0) == u.max
    assert demand(TWO, 0.25) == 2.0
    with pytest.raises(ParameterError):
        demand(TWO, 1.5)


def test_discretize_examples():
    d = discretize(Uniform(0, 1), 2)
    np.testing.assert_allclose(d.support, [0.25, 0.75])
    np.testing.assert_allclose(d.probs, [0.5, 0.5])
    pm = discretize(PointMass(3.0), 17)
    assert pm.support.tolist() == [3.0] and pm.probs.tolist() == [1.0]
    e = discretize(Exponential(1.0), 4)
    mids = np.array([0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(e.support, -np.log1p(-mids), rtol=1e-12)
    with pytest.raises(ParameterError):
        discretize(Uniform(0, 1), 1)


def test_invalid_family_parameters():
    for rec in ({"family": "uniform", "lo": 1, "hi": 0},
                {"family": "exponential", "rate": 0},
                {"family": "equal-revenue", "v_min": 2, "v_max": 1},
                {"family": "nope"}):
        with pytest.raises(ParameterError):
            parametric_from_record(rec)


def test_sample_point_mass_and_reproducible():
    pm = DiscreteDist.point_mass(3.0)
    assert np.all(sample(pm, np.random.default_rng(1), 100) == 3.0)
    d = DiscreteDist([0.0, 1.0], [0.5, 0.5])
    a = sample(d, np.random.default_rng(42), 50)
    b = sample(d, np.random.default_rng(42), 50)
    assert np.array_equal(a, b)


def test_sample_frequency_and_chi_square():
    d = DiscreteDist([1.0, 2.0], [0.9, 0.1])
    x = sample(d, np.random.default_rng(7), 100_000)
    assert abs((x == 2.0).mean() - 0.1) <= 0.01
    d5 = DiscreteDist([0.1, 0.2, 0.4, 0.8, 1.0], [0.1, 0.3, 0.2, 0.25, 0.15])
    x = sample(d5, np.random.default_rng(8), 100_000)
    counts = np.array([(x == v).sum() for v in d5.support])
    assert stats.chisquare(counts, d5.probs * x.size).pvalue > 0.001


def test_uniform_discretization_convergence():
    for m in (10, 50, 200):
        d = discretize(Uniform(0, 1), m)
        q = np.arange(m + 1) / m
        assert np.max(np.abs(demand(d, q) - (1 - q))) <= 1.0 / m + 1e-12


def test_equal_revenue_mean():
    er = EqualRevenue(1.0, 10.0)
    assert er.mean() == pytest.approx(1 + math.log(10))


def test_linear_agent_sentinel_budget():
    a = Agent.linear(TWO)
    assert a.budget.support.tolist() == [20.0]
    with pytest.raises(ParameterError):
        AgentModel(Uniform(0, 1), None, "private-budget")
    with pytest.raises(ParameterError):
        AgentModel(Uniform(0, 1), Uniform(0, 1), "public-budget")


def test_agent_record_round_trip():
    m = AgentModel(Uniform(0, 1), PointMass(0.5), "public-budget")
    again = AgentModel.from_record(m.to_record())
    assert again == m
    short = AgentModel.from_record({"utility": "public-budget",
                                    "value": {"family": "uniform"}, "budget": 0.5})
    assert short == m


dists = st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.0, 100.0, allow_nan=False), min_size=n, max_size=n, unique=True),
    st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
)).map(lambda t: DiscreteDist(sorted(t[0]), np.array(t[1]) / np.sum(t[1])))


@given(dists)
def test_round_trip_on_atoms(d):
    q = quantile_of_value(d, d.support)
    np.testing.assert_array_equal(demand(d, q), d.support)
    # an atom's own quantile sits at its upper end; nudging inward lands on it
    lower = np.concatenate(([1.0], q[:-1]))
    mid = 0.5 * (q + lower)
    np.testing.assert_array_equal(demand(d, mid), d.support)


@given(dists, st.floats(0.1, 10.0))
def test_scaling(d, c):
    qs = np.linspace(0, 1, 21)
    np.testing.assert_allclose(demand(d.scaled(c), qs), c * demand(d, qs), rtol=1e-12)
    np.testing.assert_allclose(quantile_of_value(d.scaled(c), c * d.support),
                               quantile_of_value(d, d.support), atol=1e-12)


@given(dists)
def test_quantile_monotone(d):
    vs = np.linspace(0, d.max + 1, 50)
    assert np.all(np.diff(quantile_of_value(d, vs)) <= 1e-15)
    assert np.all(np.diff(demand(d, np.linspace(0, 1, 50))) <= 0)
