"""Independent reference implementations used to cross-check the package."""

from fractions import Fraction

import sympy as sp

from fjq.exact_linalg import RationalMatrix


def bareiss_rref(rows):
    """Fraction-free elimination with integer scaling, normalised at the end.

    Pivot search takes the row with smallest absolute leading entry, which
    differs from the package's first-nonzero rule on purpose.
    """
    den = 1
    for r in rows:
        for x in r:
            den = den * Fraction(x).denominator // _gcd(den, Fraction(x).denominator)
    a = [[int(Fraction(x) * den) for x in r] for r in rows]
    m = len(a)
    n = len(a[0]) if a else 0
    pivots = []
    r = 0
    for c in range(n):
        cand = [i for i in range(r, m) if a[i][c]]
        if not cand:
            continue
        i = min(cand, key=lambda k: abs(a[k][c]))
        a[r], a[i] = a[i], a[r]
        for k in range(m):
            if k != r and a[k][c]:
                f, g = a[r][c], a[k][c]
                a[k] = [f * x - g * y for x, y in zip(a[k], a[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    out = []
    for i in range(r):
        p = a[i][pivots[i]]
        out.append([Fraction(x, p) for x in a[i]])
    while len(out) < m:
        out.append([Fraction(0)] * n)
    return out, pivots


def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def to_sympy(expr, names):
    """EnergyExpr -> sympy through its text form."""
    syms = {n: sp.Symbol(n) for n in names}
    text = expr.to_text(list(names)).replace("^", "**")
    return sp.sympify(text, locals={**syms, "pi": sp.pi, "cos": sp.cos, "sin": sp.sin})


def sympy_matrix(m: RationalMatrix):
    return sp.Matrix([[sp.Rational(x.numerator, x.denominator) for x in m.row(i)] for i in range(m.rows)])
