"""Precanonical two-form, its pullback, the Rayleigh matrix and the source map."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .constraint_assembly import ReducedSpace
from .energy_symbolics import SourceCoupling
from .exact_linalg import RationalMatrix
from .netlist import BranchKind, CircuitGraph

HALF = Fraction(1, 2)


class TellegenIdentityViolated(ValueError):
    """The raw and the simplified pullback formulas disagree."""


def _sign_pattern(graph: CircuitGraph) -> list[Fraction]:
    out = []
    for b in graph.branches:
        if b.kind in (BranchKind.CAPACITOR, BranchKind.VOLTAGE_SOURCE):
            out.append(Fraction(1))
        elif b.kind in (BranchKind.INDUCTOR, BranchKind.CURRENT_SOURCE):
            out.append(Fraction(-1))
        else:
            out.append(Fraction(0))
    return out


def _offdiag(upper: Sequence[Fraction], lower: Sequence[Fraction]) -> RationalMatrix:
    """[[0, diag(upper)], [diag(lower), 0]]."""
    nb = len(upper)
    data = [[Fraction(0)] * (2 * nb) for _ in range(2 * nb)]
    for b in range(nb):
        data[b][nb + b] = upper[b]
        data[nb + b][b] = lower[b]
    return RationalMatrix(2 * nb, 2 * nb, data)


def precanonical_two_form(graph: CircuitGraph) -> RationalMatrix:
    """E_2B = 1/2 [[0, D], [-D, 0]] with D = +1 on C and V, -1 on L and I."""
    d = [HALF * x for x in _sign_pattern(graph)]
    return _offdiag(d, [-x for x in d])


def simplified_two_form(graph: CircuitGraph) -> RationalMatrix:
    """[[0, P], [-P, 0]] with P = P_C + P_V + (P_R + P_G)/2.

    On any Kirchhoff- and Tellegen-compatible embedding it pulls back to the
    same reduced form as :func:`precanonical_two_form`.
    """
    p = []
    for b in graph.branches:
        if b.kind in (BranchKind.CAPACITOR, BranchKind.VOLTAGE_SOURCE):
            p.append(Fraction(1))
        elif b.kind in (BranchKind.RESISTOR, BranchKind.GYRATOR_PORT):
            p.append(HALF)
        else:
            p.append(Fraction(0))
    return _offdiag(p, [-x for x in p])


def congruence(k: RationalMatrix, m: RationalMatrix) -> RationalMatrix:
    return k.T @ m @ k


def pullback(space: ReducedSpace, e2b: RationalMatrix, graph: CircuitGraph | None = None) -> RationalMatrix:
    """K^T E_2B K, cross-checked against the simplified formula when graph is given."""
    e = congruence(space.k, e2b)
    if not e.is_antisymmetric():
        raise TellegenIdentityViolated("pulled-back two-form is not antisymmetric")
    if graph is not None:
        alt = congruence(space.k, simplified_two_form(graph))
        if alt != e:
            raise TellegenIdentityViolated("raw and simplified pullbacks differ")
    return e


def rayleigh_matrix(space: ReducedSpace, graph: CircuitGraph) -> RationalMatrix:
    """F = 1/2 K^T [[0, P_R], [P_R, 0]] K, so 1/2 zdot^T F zdot = 1/2 sum_r qdot_r phidot_r."""
    pr = [Fraction(1) if b.kind is BranchKind.RESISTOR else Fraction(0) for b in graph.branches]
    return congruence(space.k, _offdiag(pr, pr)).scale(HALF)


def source_map(space: ReducedSpace, graph: CircuitGraph) -> RationalMatrix:
    """M x 2B selector K^T [[0, P_V], [P_I, 0]] acting on (I(t); V(t))."""
    pv = [Fraction(1) if b.kind is BranchKind.VOLTAGE_SOURCE else Fraction(0) for b in graph.branches]
    pi_ = [Fraction(1) if b.kind is BranchKind.CURRENT_SOURCE else Fraction(0) for b in graph.branches]
    return space.k.T @ _offdiag(pv, pi_)


def source_coupling(space: ReducedSpace, graph: CircuitGraph) -> SourceCoupling:
    """S(t).z as sum over sources: V_v(t) * q_v(z) and I_i(t) * phi_i(z)."""
    nb = len(graph.branches)
    names, rows, waves = [], [], []
    for b, br in enumerate(graph.branches):
        if br.kind is BranchKind.VOLTAGE_SOURCE:
            rows.append(space.k.row(b))
        elif br.kind is BranchKind.CURRENT_SOURCE:
            rows.append(space.k.row(nb + b))
        else:
            continue
        names.append(br.id)
        waves.append(br.waveform)
    if not rows:
        return SourceCoupling.empty()
    return SourceCoupling.from_matrix(names, RationalMatrix.from_rows(rows), waves)


def source_vector(space: ReducedSpace, graph: CircuitGraph, t: float) -> list[float]:
    """S(t) = K^T [[0,P_V],[P_I,0]] (I(t); V(t)), evaluated from the waveforms."""
    nb = len(graph.branches)
    iv = [0.0] * (2 * nb)
    for b, br in enumerate(graph.branches):
        if br.kind is BranchKind.CURRENT_SOURCE:
            iv[b] = br.waveform.value(t)
        elif br.kind is BranchKind.VOLTAGE_SOURCE:
            iv[nb + b] = br.waveform.value(t)
    sm = source_map(space, graph)
    return [sum(float(sm[a, j]) * iv[j] for j in range(2 * nb) if sm[a, j]) for a in range(sm.rows)]


@dataclass(frozen=True)
class StructureBundle:
    e2b: RationalMatrix
    e_reduced: RationalMatrix
    rayleigh: RationalMatrix
    source_map: RationalMatrix
    sources: SourceCoupling


def build_structure(space: ReducedSpace, graph: CircuitGraph) -> StructureBundle:
    e2b = precanonical_two_form(graph)
    return StructureBundle(
        e2b,
        pullback(space, e2b, graph),
        rayleigh_matrix(space, graph),
        source_map(space, graph),
        source_coupling(space, graph),
    )
