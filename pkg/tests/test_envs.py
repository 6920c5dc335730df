import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pricing_lab.curves import PayoffCurve, concave_hull
from pricing_lab.envs import (
    ExplicitMatroid,
    Graphic,
    InfeasibleProfileError,
    KUnit,
    MatroidAxiomError,
    Partition,
    UnsupportedEnvironmentError,
    check_rank_axioms,
    decomposition_marginals,
    eaf_contains,
    ear_decomposition,
    ear_optimize,
    environment_from_record,
    is_feasible,
)

TRIANGLE = Graphic(((0, 1), (1, 2), (0, 2)))


def curve(fn, m=200):
    q = np.linspace(0, 1, m + 1)
    return concave_hull(PayoffCurve("revenue", q, fn(q)))


def test_is_feasible_examples():
    assert not is_feasible(KUnit(3, 2), {0, 1, 2})
    part = Partition(((0, 1), (2,)), (1, 1))
    assert is_feasible(part, {0, 2})
    assert not is_feasible(part, {0, 1})
    assert not is_feasible(TRIANGLE, {0, 1, 2})
    assert is_feasible(TRIANGLE, {0, 1})


def test_eaf_examples():
    assert eaf_contains(KUnit(2, 1), [0.5, 0.5])
    assert not eaf_contains(KUnit(2, 1), [0.7, 0.5])
    assert eaf_contains(TRIANGLE, [2 / 3] * 3)
    assert not eaf_contains(TRIANGLE, [0.7] * 3)


def test_eaf_exhaustive_matches_rank_definition():
    rng = np.random.default_rng(4)
    env = Graphic(((0, 1), (1, 2), (2, 3), (3, 0), (0, 2)))
    for _ in range(40):
        q = rng.random(5)
        ok = all(sum(q[i] for i in S) <= env.rank(set(S)) + 1e-9
                 for r in range(1, 6) for S in itertools.combinations(range(5), r))
        assert bool(eaf_contains(env, q)) == ok


def test_rank_axioms():
    for env in (KUnit(5, 2), Partition(((0, 1), (2, 3, 4)), (1, 2)), TRIANGLE):
        check_rank_axioms(env)
    broken = ExplicitMatroid(3, ((), (0,), (1,), (2,), (0, 1)))
    with pytest.raises(MatroidAxiomError):
        check_rank_axioms(broken)


def test_records_round_trip():
    for env in (KUnit(4, 2), Partition(((0, 1), (2,)), (1, 1)), TRIANGLE):
        again = environment_from_record(env.to_record())
        assert again.n == env.n
        assert np.array_equal(again.rank_table, env.rank_table)
    with pytest.raises(ValueError):
        environment_from_record({"kind": "matching"})


def test_ear_symmetric_kunit():
    h = curve(lambda q: q * (1 - q))
    for n, k in ((4, 1), (4, 2), (3, 5)):
        res = ear_optimize([h] * n, KUnit(n, k))
        np.testing.assert_allclose(res.profile, [min(0.5, k / n)] * n, atol=1e-9)


def test_ear_two_asymmetric_agents():
    # maximize q1(1-q1) + 2 q2(1-q2) with q1 + q2 <= 1
    h1, h2 = curve(lambda q: q * (1 - q)), curve(lambda q: 2 * q * (1 - q))
    res = ear_optimize([h1, h2], KUnit(2, 1))
    grid = np.linspace(0, 1, 2001)
    best = max(h1.at(a) + h2.at(1 - a) for a in grid)
    assert res.value == pytest.approx(best, abs=1e-6)
    assert res.value == pytest.approx(0.75, abs=1e-4)
    np.testing.assert_allclose(res.profile, [0.5, 0.5], atol=1e-9)


def test_ear_single_agent():
    h = curve(lambda q: q * (1 - q) ** 2)
    res = ear_optimize([h], KUnit(1, 1))
    assert res.value == pytest.approx(h.max)
    assert res.profile[0] == pytest.approx(h.argmax)


def _random_hull(rng, m=50):
    q = np.linspace(0, 1, m + 1)
    a, b = rng.uniform(0.2, 2), rng.uniform(0.5, 3)
    return concave_hull(PayoffCurve("revenue", q, a * q * (1 - q) ** b))


@pytest.mark.parametrize("env", [KUnit(3, 1), Partition(((0, 1), (2,)), (1, 1)), TRIANGLE,
                                 Graphic(((0, 1), (1, 2))) ])
def test_ear_against_grid_search(env):
    rng = np.random.default_rng(hash(env.kind) % 1000)
    m = 50
    for _ in range(3):
        hulls = [_random_hull(rng) for _ in range(env.n)]
        res = ear_optimize(hulls, env)
        grid = np.arange(m + 1) / m
        best = -1.0
        for prof in itertools.product(grid, repeat=env.n):
            if eaf_contains(env, prof):
                best = max(best, sum(h.at(x) for h, x in zip(hulls, prof)))
        L = max(h.slopes.max() for h in hulls)
        assert res.value >= best - env.n * (1 / 200) * L - 1e-9
        assert eaf_contains(env, res.profile)
        assert res.value == pytest.approx(sum(h.at(x) for h, x in zip(hulls, res.profile)), abs=1e-9)


def test_water_filling_kkt():
    rng = np.random.default_rng(12)
    hulls = [_random_hull(rng) for _ in range(5)]
    res = ear_optimize(hulls, KUnit(5, 2))
    lam = res.lam
    for h, x in zip(hulls, res.profile):
        if 1e-9 < x < 1 - 1e-9:
            s = h.segment(x)
            left = h.slopes[s]
            right = h.slopes[s + 1] if x >= h.q[s + 1] - 1e-12 and s + 1 < h.slopes.size else left
            assert right - 1e-9 <= lam <= left + 1e-9


def test_ear_monotone_in_k():
    rng = np.random.default_rng(2)
    hulls = [_random_hull(rng) for _ in range(4)]
    vals = [ear_optimize(hulls, KUnit(4, k)).value for k in range(1, 5)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_decomposition_examples():
    d = ear_decomposition(KUnit(2, 1), [0.5, 0.5])
    assert d == [(frozenset({0}), 0.5), (frozenset({1}), 0.5)]
    d = dict(ear_decomposition(KUnit(3, 1), [0.6, 0.2, 0.2]))
    assert d == pytest.approx({frozenset({0}): 0.6, frozenset({1}): 0.2, frozenset({2}): 0.2})
    d = dict(ear_decomposition(KUnit(3, 2), [1.0, 0.5, 0.5]))
    assert d == pytest.approx({frozenset({0, 1}): 0.5, frozenset({0, 2}): 0.5})


def test_decomposition_errors():
    with pytest.raises(InfeasibleProfileError):
        ear_decomposition(KUnit(2, 1), [0.7, 0.5])
    with pytest.raises(UnsupportedEnvironmentError):
        ear_decomposition(TRIANGLE, [0.1, 0.1, 0.1])


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 3))
def test_decomposition_marginals_kunit(seed, n, k):
    rng = np.random.default_rng(seed)
    q = rng.random(n)
    if q.sum() > k:
        q *= k / q.sum()
    env = KUnit(n, k)
    dec = ear_decomposition(env, q)
    assert sum(p for _, p in dec) == pytest.approx(1.0)
    assert len(dec) <= n + 1
    assert all(is_feasible(env, S) for S, _ in dec)
    np.testing.assert_allclose(decomposition_marginals(n, dec), q, atol=1e-9)


@given(st.integers(0, 10_000))
def test_decomposition_marginals_partition(seed):
    rng = np.random.default_rng(seed)
    env = Partition(((0, 1, 2), (3, 4), (5,)), (2, 1, 1))
    q = rng.random(6)
    for b, c in zip(env.blocks, env.caps):
        s = q[list(b)].sum()
        if s > c:
            q[list(b)] *= c / s
    dec = ear_decomposition(env, q)
    assert all(is_feasible(env, S) for S, _ in dec)
    np.testing.assert_allclose(decomposition_marginals(6, dec), q, atol=1e-9)
