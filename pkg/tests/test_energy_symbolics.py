import math
from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import circuit
from fjq.constraint_assembly import assemble_pfaff, kernel_embedding
from fjq.energy_symbolics import (
    EnergyExpr,
    ExprSyntaxError,
    Implicit,
    LinearDependentOnVar,
    PiRational,
    Solution,
    SourceCoupling,
    Verdict,
    const,
    cos,
    gradient,
    hessian_lower_bound_certified,
    parse_expr,
    parse_scalar,
    sin,
    solve_extremum,
    total_energy,
    var,
)
from fjq.exact_linalg import RationalMatrix
from oracles import to_sympy

NAMES = ["x", "y", "z"]
coef = st.fractions(min_value=-3, max_value=3, max_denominator=4)


@st.composite
def affine_args(draw):
    e = const(draw(coef))
    for v in range(3):
        a = draw(st.integers(-2, 2))
        if a:
            e = e + var(v).scale(a)
    return e


@st.composite
def terms(draw):
    t = const(draw(coef))
    for v in range(3):
        t = t * var(v) ** draw(st.integers(0, 2))
    kind = draw(st.sampled_from([None, "cos", "sin"]))
    if kind:
        arg = draw(affine_args())
        t = t * (cos(arg) if kind == "cos" else sin(arg))
    return t


@st.composite
def exprs(draw):
    e = EnergyExpr()
    for t in draw(st.lists(terms(), min_size=1, max_size=4)):
        e = e + t
    return e


points = st.lists(st.floats(-2, 2), min_size=3, max_size=3)


@given(exprs(), st.integers(0, 2), points)
def test_derivative_matches_sympy(e, v, x):
    ours = e.diff(v).evaluate(x)
    syms = sp.symbols(NAMES)
    ref = sp.diff(to_sympy(e, NAMES), syms[v])
    val = float(ref.subs(dict(zip(syms, x))))
    assert ours == pytest.approx(val, rel=1e-9, abs=1e-9)


@given(exprs(), points)
def test_evaluation_matches_sympy(e, x):
    syms = sp.symbols(NAMES)
    val = float(to_sympy(e, NAMES).subs(dict(zip(syms, x))))
    assert e.evaluate(x) == pytest.approx(val, rel=1e-9, abs=1e-9)


@given(exprs())
def test_text_round_trip(e):
    assert parse_expr(e.to_text(NAMES), NAMES) == e


@given(exprs(), affine_args(), st.integers(0, 2), points)
def test_chain_rule_under_affine_substitution(e, image, v, x):
    # d/dx_v e(image, y, z) = e_x(image, y, z) * d image/dx_v + [v != 0] e_v(...)
    mapping = {0: image}
    lhs = e.substitute(mapping).diff(v)
    rhs = e.diff(0).substitute(mapping) * image.diff(v)
    if v != 0:
        rhs = rhs + e.diff(v).substitute(mapping)
    assert lhs.evaluate(x) == pytest.approx(rhs.evaluate(x), rel=1e-9, abs=1e-9)


def test_trig_derivatives():
    x = var(0)
    assert cos(x.scale(2) + const(1)).diff(0) == sin(x.scale(2) + const(1)).scale(-2)
    assert sin(x).diff(0) == cos(x)
    assert (x ** 3).diff(0) == (x ** 2).scale(3)


def test_parse_expressions():
    e = parse_expr("x^2/2 - 3*cos(2*pi*x)", ["x"])
    assert e.evaluate([0.25]) == pytest.approx(0.25 ** 2 / 2 - 3 * math.cos(math.pi / 2))
    assert parse_scalar("2*pi") == PiRational.pi() * 2
    assert float(parse_scalar("1/(2*pi)")) == pytest.approx(1 / (2 * math.pi))
    with pytest.raises(ExprSyntaxError):
        parse_expr("x +* 2", ["x"])


def test_pi_rational_intervals():
    p = PiRational.pi()
    lo, hi = p.interval()
    assert lo < Fraction(314159265358979324, 10**17) < hi
    assert (p - PiRational(3)).sign() == 1
    assert (PiRational(Fraction(22, 7)) - p).sign() == 1
    assert (p * p.inverse()) == PiRational(1)


def test_rlc_energy_and_gradient():
    g = circuit("rlc")
    h = total_energy(g, kernel_embedding(assemble_pfaff(g), g))
    c, ell, r = 2, 3, 5
    q1, q2 = var(0), var(1)
    expected = (q1 ** 2).scale(Fraction(1, 2 * c)) + ((q1 + q2) ** 2).scale(Fraction(r * r, 2 * ell))
    assert h.h == expected
    gx = gradient(h)
    assert gx[0] == q1.scale(Fraction(1, c)) + (q1 + q2).scale(Fraction(r * r, ell))
    assert gx[1] == (q1 + q2).scale(Fraction(r * r, ell))


def test_josephson_energy_uses_cosine():
    g = circuit("squid")
    h = total_energy(g, kernel_embedding(assemble_pfaff(g), g))
    assert h.h.trig_terms()
    assert h.h.bounds() is None  # charge part is unbounded


def star_energy(c1, c2, c3):
    qa, qb, wc = var(0), var(1), var(2)
    return ((qa + wc) ** 2).scale(Fraction(1, 2) / c1) + (wc ** 2).scale(Fraction(1, 2) / c2) \
        + ((qb + wc) ** 2).scale(Fraction(1, 2) / c3)


def test_star_charge_extremum():
    c1, c2, c3 = Fraction(1), Fraction(2), Fraction(3)
    sol = solve_extremum(star_energy(c1, c2, c3), [2])
    assert isinstance(sol, Solution)
    denom = 1 / c1 + 1 / c2 + 1 / c3
    expected = (var(0).scale(1 / c1) + var(1).scale(1 / c3)).scale(-1 / denom)
    assert sol.subs[2] == expected
    assert sol.hessian.tolist() == [[denom]]


def test_affine_solution_zeroes_gradient():
    h = star_energy(Fraction(2), Fraction(5), Fraction(7))
    sol = solve_extremum(h, [2])
    reduced_grad = h.diff(2).substitute(sol.subs)
    assert reduced_grad.is_zero()


def test_extremum_with_source_gain():
    # H = w^2/2 + Q w, plus V(t) * w in the source coupling
    h = (var(1) ** 2).scale(Fraction(1, 2)) + var(0) * var(1)
    src = SourceCoupling.from_matrix(["V"], RationalMatrix.from_rows([[0, 1]]))
    sol = solve_extremum(h, [1], src)
    assert sol.subs[1] == -var(0)
    assert sol.source_gain.tolist() == [[-1]]


def test_affine_direction_raises():
    h = (var(0) ** 2).scale(Fraction(1, 2)) + var(0) * var(1)
    with pytest.raises(LinearDependentOnVar):
        solve_extremum(h, [1])


def test_nonlinear_extremum_certified():
    w = var(0)
    h = (w ** 2) - cos(w).scale(Fraction(1, 2))
    out = solve_extremum(h, [0])
    assert isinstance(out, Implicit)
    assert out.invertibility == Verdict.INVERTIBLE


def test_nonlinear_extremum_not_certified():
    w = var(0)
    h = (w ** 2).scale(Fraction(1, 2)) + cos(w).scale(2)
    out = solve_extremum(h, [0])
    assert out.invertibility == Verdict.INCONCLUSIVE


def test_certificate_with_rank_one_trig_atom():
    # [[h'' + 1/C1 + 1/C2]] with h'' = -1/2 cos(Q) stays positive for C1 = C2 = 1
    w = var(0)
    hess = [[const(2) - cos(w).scale(Fraction(1, 2))]]
    ok, _ = hessian_lower_bound_certified(hess)
    assert ok
    ok, _ = hessian_lower_bound_certified([[const(1) - cos(w).scale(2)]])
    assert not ok


def fd_gradient(f, x, h=1e-6):
    out = []
    for i in range(len(x)):
        xp, xm = list(x), list(x)
        xp[i] += h
        xm[i] -= h
        out.append((f(xp) - f(xm)) / (2 * h))
    return out


@pytest.mark.parametrize("text", [
    "x^2/2 + 3*y^2/4",
    "-cos(x) - 1/2*cos(2*x - y)",
    "x^4/4 - x^2 + y*x",
    "cos(x)*y^2 + sin(z - 1/3)",
])
def test_gradient_against_finite_differences(text):
    e = parse_expr(text, NAMES)
    f = e.compile()
    grads = [g.compile() for g in e.gradient(3)]
    for x in ([0.1, -0.4, 1.3], [1.7, 0.2, -0.9], [-2.0, 1.0, 0.5]):
        fd = fd_gradient(f, x)
        for g, ref in zip(grads, fd):
            assert g(x) == pytest.approx(ref, rel=1e-6, abs=1e-7)
