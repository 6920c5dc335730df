"""Independent reference implementations used only by the test suite."""

from __future__ import annotations

from fractions import Fraction


def _fr(v) -> Fraction:
    return Fraction(v.item() if hasattr(v, "item") else v)


def rational_simplex(c, A, b, upper):
    """Exact ``max c'x  s.t.  A x <= b,  0 <= x <= upper`` with ``b >= 0``.

    Box bounds become explicit rows; Bland's rule on a Fraction tableau.
    Returns ``(status, objective)``.
    """
    n = len(c)
    rows = [[_fr(v) for v in row] for row in A]
    rhs = [_fr(v) for v in b]
    for j, u in enumerate(upper):
        if u is not None:
            rows.append([Fraction(int(k == j)) for k in range(n)])
            rhs.append(_fr(u))
    if any(r < 0 for r in rhs):
        raise ValueError("oracle needs a nonnegative right-hand side")
    m = len(rows)
    width = n + m
    tab = [row + [Fraction(int(i == k)) for k in range(m)] + [rhs[i]] for i, row in enumerate(rows)]
    basis = [n + i for i in range(m)]
    cost = [_fr(v) for v in c] + [Fraction(0)] * m
    while True:
        red = [cost[j] - sum(cost[basis[i]] * tab[i][j] for i in range(m)) for j in range(width)]
        enter = next((j for j in range(width) if red[j] > 0), None)
        if enter is None:
            obj = sum(cost[basis[i]] * tab[i][-1] for i in range(m))
            return "optimal", obj
        best = None
        for i in range(m):
            a = tab[i][enter]
            if a > 0:
                ratio = tab[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return "unbounded", None
        r = best[1]
        piv = tab[r][enter]
        tab[r] = [v / piv for v in tab[r]]
        for i in range(m):
            if i != r and tab[i][enter] != 0:
                f = tab[i][enter]
                tab[i] = [a - f * bb for a, bb in zip(tab[i], tab[r])]
        basis[r] = enter
