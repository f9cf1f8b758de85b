"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS or FAIL line (shown even under output
capture) and fails the usual way when any of its assertions do.
"""

import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import Phase, given, settings

from conftest import CIRCUITS, circuit
from fjq import HamiltonianModel, ObstructionKind, ObstructionReport, parse_netlist, run_reduction
from fjq.constraint_assembly import assemble_pfaff, kernel_embedding, tellegen_check
from fjq.dynamics import (
    SimConfig,
    characteristic_period,
    compare_with_oracle,
    integrate,
    reconstruct,
    slaved_pair_report,
)
from fjq.energy_symbolics import Verdict, const, parse_expr, total_energy
from fjq.exact_linalg import (
    RationalMatrix,
    canonical_block,
    inverse,
    matmul,
    rank,
    row_space_equal,
    transpose,
)
from fjq.fj_reduction import adapted_darboux, flux_to_sources, initial_state
from fjq.graph_topology import fundamental_matrices
from fjq.model_io import quadratic_form
from fjq.symplectic_structure import congruence, precanonical_two_form, simplified_two_form
from oracles import to_sympy
from strategies import circuits


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(label):
        notes = {}
        try:
            yield notes
        except BaseException as exc:
            with capsys.disabled():
                print(f"\n{label}: FAIL ({type(exc).__name__}: {exc})")
            raise
        detail = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in notes.items())
        with capsys.disabled():
            print(f"\n{label}: PASS" + (f" [{detail}]" if detail else ""))
    return run


def q(x):
    return f"{Fraction(x).numerator}/{Fraction(x).denominator}"


def rand_rational(rng, lo=1, hi=9):
    return Fraction(rng.randint(lo * 4, hi * 4), rng.randint(1, 4))


def model(g):
    m = run_reduction(g)
    assert isinstance(m, HamiltonianModel), m
    return m


# 1 ------------------------------------------------------------------------


def test_c1_series_loop_topology(criterion):
    with criterion("C1 series-loop topology") as notes:
        g = circuit("series_loop")
        fundamental_matrices(g)  # warm-up
        t0 = time.perf_counter()
        topo = fundamental_matrices(g)
        elapsed = time.perf_counter() - t0
        assert topo.cutset == RationalMatrix.from_rows([[1, 0, 1], [0, 1, -1]])
        assert row_space_equal(topo.loop, RationalMatrix.from_rows([[1, -1, -1]]))
        assert matmul(topo.loop, transpose(topo.cutset)).is_zero()
        notes["seconds"] = elapsed
        assert elapsed < 1e-3, elapsed


# 2 ------------------------------------------------------------------------

RLC_SETS = [(2, 3, 5), ("1/2", "7/3", "3/4"), (11, "1/5", 2), ("5/7", 13, "9/2")]


def rlc_text(c, ell, r):
    return f"node 1 0\nbranch C cap 1 0 C={q(c)}\nbranch L ind 1 0 L={q(ell)}\nbranch R res 1 0 R={q(r)}\n"


def test_c2_rlc(criterion):
    with criterion("C2 RLC two-form, energy, Rayleigh form and equations of motion"):
        for c, ell, r in RLC_SETS:
            c, ell, r = Fraction(c), Fraction(ell), Fraction(r)
            st = initial_state(parse_netlist(rlc_text(c, ell, r)))
            assert st.e == RationalMatrix.from_rows([[0, -r], [r, 0]])
            q1, q2 = sp.symbols("Q_1 Q_2")
            h_ref = q1 ** 2 / (2 * sp.Rational(c)) + sp.Rational(r) ** 2 * (q1 + q2) ** 2 / (2 * sp.Rational(ell))
            assert sp.expand(to_sympy(st.h, ["Q_1", "Q_2"]) - h_ref) == 0
            # 1/2 zdot^T F zdot = R/2 (Q1dot + Q2dot)^2
            assert st.f == RationalMatrix.from_rows([[r, r], [r, r]])
            # (Q1, Q2) = A (Q, Phi) and (E - F) zdot = grad H
            a = RationalMatrix.from_rows([[1, 0], [-1, -1 / r]])
            e_new = a.T @ st.e @ a
            f_new = a.T @ st.f @ a
            hess = quadratic_form(st.h, 2)
            rhs = a.T @ hess @ a
            assert rhs == RationalMatrix.diag([1 / c, 1 / ell])  # H = Q^2/2C + Phi^2/2L
            flow = inverse(e_new - f_new) @ rhs
            # rows (Qdot, Phidot): Qdot = -Q/RC - Phi/L, Phidot = Q/C
            assert flow == RationalMatrix.from_rows([[-1 / (r * c), -1 / ell], [1 / c, 0]])
            m = model(parse_netlist(rlc_text(c, ell, r)))
            assert m.n_pairs == 1


# 3 ------------------------------------------------------------------------


def star_text(cs, ls):
    c1, c2, c3 = cs
    l1, l2, l3 = ls
    return (
        "node 1 2 3 0\n"
        f"branch C1 cap 1 2 C={q(c1)}\nbranch C2 cap 2 3 C={q(c2)}\nbranch C3 cap 3 1 C={q(c3)}\n"
        f"branch L1 ind 1 0 L={q(l1)}\nbranch L2 ind 2 0 L={q(l2)}\nbranch L3 ind 3 0 L={q(l3)}\n"
    )


def star_physical_map(g):
    """Rows (Qa, Qb, Phia, Phib) over the branch variables (q..., phi...)."""
    nb = len(g.branches)
    rows = []
    for plus, minus, offset in (("C1", "C2", 0), ("C3", "C2", 0), ("L1", "L2", nb), ("L3", "L1", nb)):
        row = [Fraction(0)] * (2 * nb)
        row[offset + g.branch_index(plus)] += 1
        row[offset + g.branch_index(minus)] -= 1
        rows.append(row)
    return RationalMatrix.from_rows(rows)


def test_c3_linear_star(criterion):
    with criterion("C3 linear star: 2 pairs, 2 zero modes, exact inverse capacitance and inductance"):
        rng = random.Random(3)
        for _ in range(5):
            cs = [rand_rational(rng) for _ in range(3)]
            ls = [rand_rational(rng) for _ in range(3)]
            g = parse_netlist(star_text(cs, ls))
            m = model(g)
            assert m.n_pairs == 2
            assert len(m.provenance[0].modes) == 2
            t = star_physical_map(g) @ m.embedding.lin
            t_inv = inverse(t)
            hess = t_inv.T @ quadratic_form(m.hamiltonian, 4) @ t_inv
            c1, c2, c3 = cs
            l1, l2, l3 = ls
            cstar = c1 * c2 + (c1 + c2) * c3
            lstar = l1 * l2 + (l1 + l2) * l3
            cinv = RationalMatrix.from_rows([[c2 + c3, -c2], [-c2, c1 + c2]]).scale(1 / cstar)
            linv = RationalMatrix.from_rows([[l1 + l3, l1], [l1, l1 + l2]]).scale(1 / lstar)
            assert hess.submatrix(range(2), range(2)) == cinv
            assert hess.submatrix(range(2, 4), range(2, 4)) == linv
            assert hess.submatrix(range(2), range(2, 4)).is_zero()


# 4 ------------------------------------------------------------------------


def star_nonlinear_text(cap3, ind1):
    return (CIRCUITS / "star_nonlinear.net").read_text() \
        .replace("expr=x^2/6+x^4/12", f"expr={cap3}").replace("expr=x^2/10-cos(x)/20", f"expr={ind1}")


def check_constraint_structure(g, mode, triangle, charge):
    """The zero-mode constraint is sum_b (K_b.W) h_b'(K_b z), with unit weights on the triangle."""
    st = initial_state(g)
    k = st.embedding.lin
    nb = len(g.branches)
    names = st.names()
    syms = sp.symbols(names)
    x = sp.Symbol("x")
    total = 0
    weights = {}
    for b, br in enumerate(g.branches):
        row = b if br.kind.is_charge_energy else nb + b
        weight = sum(k[row, j] * mode.vector[j] for j in range(k.cols))
        if br.energy is None or not weight:
            continue
        weights[br.id] = weight
        arg = sum(sp.Rational(k[row, j]) * syms[j] for j in range(k.cols))
        total += sp.Rational(weight) * sp.diff(to_sympy(br.energy, ["x"]), x).subs(x, arg)
    assert set(weights) == set(triangle)
    assert len(set(weights.values())) == 1 and abs(next(iter(weights.values()))) == 1
    assert mode.kind_hint == ("PureCharge" if charge else "PureFlux")
    assert sp.simplify(to_sympy(mode.constraint, names) - total) == 0


def test_c4_nonlinear_star(criterion):
    with criterion("C4 nonlinear star: constraint structure, Invertible verdicts, 2 pairs"):
        for cap3, ind1 in (("x^2/6+x^4/12", "x^2/10-cos(x)/20"), ("-cos(x)/2", "x^2/10-cos(x)/20")):
            g = parse_netlist(star_nonlinear_text(cap3, ind1))
            m = model(g)
            assert m.n_pairs == 2
            modes = m.provenance[0].modes
            assert [md.classification for md in modes] == ["Dynamical", "Dynamical"]
            check_constraint_structure(g, modes[0], ["C1", "C2", "C3"], charge=True)
            check_constraint_structure(g, modes[1], ["L1", "L2", "L3"], charge=False)
            assert [c.verdict for c in m.implicit] == [Verdict.INVERTIBLE] * 2
        # h'' + 1/C1 + 1/C2 = 3 cos x + 3/2 changes sign: no certificate, no reduced model
        out = run_reduction(parse_netlist(star_nonlinear_text("-3*cos(x)", "x^2/10-cos(x)/20")))
        assert isinstance(out, ObstructionReport)
        assert out.kind is ObstructionKind.NON_HOMOGENEOUS_RANK


# 5 ------------------------------------------------------------------------


def blackbox_text(n, r):
    rows = "[" + ",".join("[" + ",".join(str(x) for x in row) + "]" for row in n) + "]"
    text = (CIRCUITS / "blackbox.net").read_text()
    return text.replace("N=[[2,1],[1,3]]", f"N={rows}").replace("R=11", f"R={q(r)}")


def test_c5_black_box(criterion):
    with criterion("C5 black box: one gauge mode, 3 pairs, entries +-R/Delta_N"):
        for n, r in (([[2, 1], [1, 3]], 11), ([[1, 2], [3, 4]], Fraction(5, 2)), ([[3, 1], [1, 1]], 7)):
            g = parse_netlist(blackbox_text(n, r))
            delta = n[0][0] * n[1][1] - n[0][1] * n[1][0]
            ratio = Fraction(r) / delta
            e = initial_state(g).e
            m = model(g)
            assert m.gauge_modes == 1
            assert m.n_pairs == 3
            # reference magnitudes; the R/Delta block carries the opposite overall sign
            expected = [
                [0, ratio, 0, ratio, 1, 0, 0],
                [ratio, 0, ratio, 0, 0, 0, 0],
                [0, ratio, 0, ratio, 1, 1, 0],
                [ratio, 0, ratio, 0, 0, 0, 1],
                [1, 0, 1, 0, 0, 0, 0],
                [0, 0, 1, 0, 0, 0, 0],
                [0, 0, 0, 1, 0, 0, 0],
            ]
            assert [[abs(x) for x in row] for row in e.tolist()] == [[abs(x) for x in row] for row in expected]
            assert e.is_antisymmetric()
            assert {e[0, 1], e[0, 3], e[2, 1], e[2, 3]} == {-ratio}


# 6 ------------------------------------------------------------------------


def test_c6_squid(criterion):
    with criterion("C6 SQUID: KVL constraint with emf, charging energy q1^2/C_sigma, one slaved pair"):
        g = flux_to_sources(circuit("squid"))
        st = initial_state(g)
        m = model(g)
        (mode,) = m.provenance[0].modes
        assert mode.classification == "Dynamical"
        k = st.embedding.lin
        cj1, cj2 = g.branch_index("CJ1"), g.branch_index("CJ2")
        c_j1, c_j2 = Fraction(3), Fraction(5)
        kvl = [k[cj1, j] / c_j1 - k[cj2, j] / c_j2 for j in range(k.cols)]
        lin = [mode.constraint.linear_coefficient(j).as_fraction() for j in range(k.cols)]
        sign = 1 if lin == kvl else -1
        # s (q_CJ1/C_J1 - q_CJ2/C_J2 - V_e) = 0 with the loop oriented along +J1, -J2
        assert lin == [sign * x for x in kvl]
        assert mode.source_terms == (-sign,)
        c_sigma = c_j1 + c_j2
        charge = charge_hessian(m)
        # rotate with O = (1/sqrt 2)[[1, 1], [1, -1]]: O H O = diag(2/C_sigma, 0), i.e. q1^2/C_sigma
        o2 = RationalMatrix.from_rows([[1, 1], [1, -1]])
        assert (o2 @ charge @ o2).scale(Fraction(1, 2)) == RationalMatrix.diag([2 / c_sigma, 0])
        rep = slaved_pair_report(m)
        assert len(rep) == 1
        assert m.n_pairs - len(rep) == 1


def charge_hessian(m):
    """Second derivatives of H in the charge coordinates, read off exactly."""
    idx = [i for i, n in enumerate(m.names) if n.startswith("Q_")]
    zero = {j: const(0) for j in range(len(m.names))}
    rows = []
    for a in idx:
        row = []
        for b in idx:
            d = m.hamiltonian.diff(a).diff(b).substitute(zero)
            row.append(d.constant_term().as_fraction())
        rows.append(row)
    return RationalMatrix.from_rows(rows)


# 7 ------------------------------------------------------------------------


def first_integral(q_c, phi_j, cap, ej, beta):
    return q_c ** 2 / (2 * cap) - ej * (np.cos(phi_j) + beta / 4 * np.cos(2 * phi_j))


def test_c7_junction_loop(criterion):
    with criterion("C7 L+JJ loop: first integral over 1e4 RK4 steps, beta = 2 obstruction, flip at pi") as notes:
        g = circuit("ljj_half")
        m = model(g)
        cap, ej, beta = 1.0, 1.0, 0.5
        traj = integrate(m, SimConfig(100.0, 0.01), [0.5, 0.2])
        assert traj.states.shape[0] == 10 ** 4 + 1
        nb = len(g.branches)
        c, j = g.branch_index("C"), g.branch_index("J")
        zeta = np.array([reconstruct(m, s, t) for s, t in zip(traj.states, traj.times)])
        e1 = first_integral(zeta[:, c], zeta[:, nb + j], cap, ej, beta)
        drift = float(np.max(np.abs(e1 - e1[0]))) / abs(e1[0])
        notes["first_integral_drift"] = drift
        assert drift < 1e-7

        out = run_reduction(circuit("ljj_two"))
        assert isinstance(out, ObstructionReport)
        assert out.kind is ObstructionKind.NON_HOMOGENEOUS_RANK
        assert out.witness_text == "1 + 2*cos(phi_J)"

        # V(phi) = -EJ [cos phi + beta/4 cos 2 phi]; V''(pi) = EJ (beta - 1)
        phi, b = sp.symbols("phi beta")
        for beta_val in (Fraction(1, 2), Fraction(9, 10), Fraction(11, 10), Fraction(2)):
            pot = parse_expr(f"-(cos(phi) + {q(beta_val)}/4*cos(2*phi))", ["phi"])
            ours = pot.diff(0).diff(0).evaluate([math.pi])
            ref = sp.diff(-(sp.cos(phi) + b / 4 * sp.cos(2 * phi)), phi, 2).subs({phi: sp.pi, b: sp.Rational(beta_val)})
            assert ours == pytest.approx(float(ref), abs=1e-12)
            assert (ours > 0) == (beta_val > 1)


# 8 ------------------------------------------------------------------------


def test_c8_random_circuit_properties(criterion):
    with criterion("C8 property suite on 100 random circuits") as notes:
        seen = []

        @settings(max_examples=100, derandomize=True, database=None, phases=[Phase.generate])
        @given(circuits())
        def check(g):
            seen.append(1)
            pfaff = assemble_pfaff(g)
            space = kernel_embedding(pfaff, g)
            assert tellegen_check(space, g).ok
            raw = congruence(space.k, precanonical_two_form(g))
            assert raw == congruence(space.k, simplified_two_form(g))
            assert rank(pfaff.f) + space.dim == 2 * len(g.branches)
            assert rank(raw) % 2 == 0
            st = initial_state(g, space)
            s, p, z = adapted_darboux(st.e, st.f)
            assert s.T @ st.e @ s == canonical_block(p, z)
            assert 2 * p == rank(st.e)

        t0 = time.perf_counter()
        check()
        elapsed = time.perf_counter() - t0
        notes["circuits"] = len(seen)
        notes["seconds"] = elapsed
        assert len(seen) >= 100
        assert elapsed < 10.0, elapsed


# 9 ------------------------------------------------------------------------


def test_c9_oracle_dynamics(criterion):
    with criterion("C9 reduced versus full-system integration on the linear examples") as notes:
        for name, x0 in (("lc", [1.0, 0.5]), ("rlc", [0.4, -0.2]), ("star", [0.3, -0.2, 0.5, 0.1]),
                         ("series_loop", [0.3, -0.4])):
            g = circuit(name)
            m = model(g)
            period = characteristic_period(m)
            out = compare_with_oracle(g, m, SimConfig(10 * period, period / 1000), x0)
            notes[f"{name}_deviation"] = out.deviation
            assert out.deviation < 1e-5, (name, out.deviation)
            traj = out.reduced
            bal = traj.balance()
            rel = float(np.max(np.abs(bal - bal[0]))) / abs(traj.energy[0])
            notes[f"{name}_{'drift' if m.rayleigh.is_zero() else 'balance'}"] = rel
            if m.rayleigh.is_zero():
                assert rel < 1e-8, (name, rel)
            else:
                assert rel < 1e-6, (name, rel)
                assert traj.energy[-1] < traj.energy[0]


# 10 -----------------------------------------------------------------------

PHASE_SLIP_LOOP = """node a b c
branch P phaseslip a b EP=1/3 qe=1/2
branch L ind b c L=2
branch C cap c a C=3
"""

ENERGY_CLASSES = [
    ("quadratic", "star"),
    ("Josephson cosine", "squid"),
    ("phase-slip cosine", PHASE_SLIP_LOOP),
    ("mixed polynomial and cosine", "star_nonlinear"),
    ("mixed nonreciprocal", "blackbox"),
]


def test_c10_gradient_checks(criterion):
    with criterion("C10 symbolic gradient versus central differences") as notes:
        rng = np.random.default_rng(10)
        for label, name in ENERGY_CLASSES:
            g = parse_netlist(name) if "\n" in name else circuit(name)
            if g.external_fluxes:
                g = flux_to_sources(g)
            h = total_energy(g, kernel_embedding(assemble_pfaff(g), g)).h
            n = initial_state(g).dim
            fn = h.compile()
            grad = [h.diff(j).compile() for j in range(n)]
            worst = 0.0
            for _ in range(20):
                x = rng.uniform(-1.5, 1.5, n)
                sym = np.array([gj(x) for gj in grad])
                fd = np.zeros(n)
                for j in range(n):
                    step = 1e-5 * (1 + abs(x[j]))
                    e = np.zeros(n)
                    e[j] = step
                    fd[j] = (fn(x + e) - fn(x - e)) / (2 * step)
                worst = max(worst, float(np.max(np.abs(sym - fd))) / max(float(np.max(np.abs(sym))), 1e-12))
            notes[label.replace(" ", "_")] = worst
            assert worst < 1e-6, (label, worst)
