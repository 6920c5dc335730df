import numpy as np
import pytest
from hypothesis import given, strategies as st

from pricing_lab.lpsolve import LinearProgram, solve_lp

from oracles import rational_simplex


def test_single_bound():
    sol = solve_lp(LinearProgram([1.0], [[1.0]], [3.0], lower=[0.0], upper=[10.0]), "simplex")
    assert sol.ok and sol.objective == pytest.approx(3.0) and sol.x[0] == pytest.approx(3.0)


def test_degenerate_optimum_set():
    sol = solve_lp(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [1.0], upper=[1.0, 1.0]), "simplex")
    assert sol.ok and sol.objective == pytest.approx(1.0)
    assert sol.x.sum() == pytest.approx(1.0)


def test_infeasible_and_unbounded_are_statuses():
    bad = LinearProgram([1.0], [[1.0]], [1.0], [[1.0]], [2.0], upper=[5.0])
    assert solve_lp(bad, "simplex").status == "infeasible"
    assert solve_lp(bad, "highs").status == "infeasible"
    free = LinearProgram([1.0, 0.0], [[-1.0, 1.0]], [0.0])
    assert solve_lp(free, "simplex").status == "unbounded"


def test_invalid_program_rejected():
    with pytest.raises(ValueError):
        LinearProgram([1.0], lower=[2.0], upper=[1.0])
    with pytest.raises(ValueError):
        LinearProgram([np.nan])
    with pytest.raises(ValueError):
        LinearProgram([1.0, 1.0], [[1.0]], [1.0])


def _random_lp(seed, m=20, n=40):
    rng = np.random.default_rng(seed)
    A = rng.integers(-3, 6, size=(m, n)).astype(float)
    b = rng.integers(1, 20, size=m).astype(float)
    c = rng.integers(-2, 8, size=n).astype(float)
    upper = rng.integers(1, 5, size=n).astype(float)
    return c, A, b, upper


@pytest.mark.parametrize("seed", range(3))
def test_matches_rational_reference(seed):
    c, A, b, upper = _random_lp(seed)
    status, ref = rational_simplex(c, A, b, upper)
    assert status == "optimal"
    sol = solve_lp(LinearProgram(c, A, b, upper=upper), "simplex")
    assert sol.ok
    assert sol.objective == pytest.approx(float(ref), abs=1e-6)
    r, bnd = LinearProgram(c, A, b, upper=upper).residuals(sol.x)
    assert r <= 1e-7 and bnd <= 1e-9


@given(st.integers(0, 100_000))
def test_weak_duality_and_backends(seed):
    c, A, b, upper = _random_lp(seed, 8, 12)
    lp = LinearProgram(c, A, b, upper=upper)
    s1 = solve_lp(lp, "simplex")
    s2 = solve_lp(lp, "highs")
    assert s1.status == s2.status == "optimal"
    assert s1.objective == pytest.approx(s2.objective, abs=1e-6)
    assert s1.dual_bound >= s1.objective - 1e-6
    assert abs(s1.duality_gap) <= 1e-6


def test_deterministic():
    c, A, b, upper = _random_lp(99)
    lp = LinearProgram(c, A, b, upper=upper)
    a, b2 = solve_lp(lp, "simplex"), solve_lp(lp, "simplex")
    assert np.array_equal(a.x, b2.x) and a.iterations == b2.iterations


def test_equality_rows_and_lower_bounds():
    # max x + 2y, x + y = 1.5, 0.25 <= x <= 1, 0 <= y <= 1
    lp = LinearProgram([1.0, 2.0], None, None, [[1.0, 1.0]], [1.5], [0.25, 0.0], [1.0, 1.0])
    sol = solve_lp(lp, "simplex")
    assert sol.objective == pytest.approx(2.5)
    np.testing.assert_allclose(sol.x, [0.5, 1.0], atol=1e-9)
