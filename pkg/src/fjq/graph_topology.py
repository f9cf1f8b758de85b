"""Incidence, fundamental cutset and fundamental loop matrices."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .exact_linalg import RationalMatrix, kernel_basis, nonzero_rows, rref
from .netlist import CircuitGraph


class NotACycle(ValueError):
    """The signed branch set is not in the cycle space of the graph."""


@dataclass(frozen=True)
class TopologyData:
    incidence: RationalMatrix
    cutset: RationalMatrix
    loop: RationalMatrix
    tree_branches: tuple[int, ...]
    chords: tuple[int, ...]
    components: int


def incidence_matrix(graph: CircuitGraph) -> RationalMatrix:
    """N x B matrix: +1 where a branch leaves a node, -1 where it enters."""
    node_ix = {n: i for i, n in enumerate(graph.nodes)}
    data = [[0] * len(graph.branches) for _ in graph.nodes]
    for b, br in enumerate(graph.branches):
        data[node_ix[br.tail]][b] += 1
        data[node_ix[br.head]][b] -= 1
    return RationalMatrix(len(graph.nodes), len(graph.branches), data)


def fundamental_matrices(graph: CircuitGraph) -> TopologyData:
    """Cutset rows from the RREF of the incidence matrix, loop rows from its kernel.

    Pivot columns (in declaration order) are the tree branches; the other
    columns are chords, and loop row i is the chord-i fundamental cycle.
    """
    a = incidence_matrix(graph)
    r, pivots = rref(a)
    cutset = nonzero_rows(r)
    loop = kernel_basis(a).T
    chords = tuple(c for c in range(a.cols) if c not in set(pivots))
    return TopologyData(a, cutset, loop, tuple(pivots), chords, a.rows - len(pivots))


def signed_loop_vector(graph: CircuitGraph, loop: Sequence[tuple[int, str]]) -> list[Fraction]:
    vec = [Fraction(0)] * len(graph.branches)
    for sign, bid in loop:
        vec[graph.branch_index(bid)] += sign
    return vec


def loop_in_chord_basis(topo: TopologyData, loop) -> list[Fraction]:
    """Coefficients L of a cycle vector in the fundamental-loop basis.

    ``loop`` is a length-B signed vector. Each fundamental loop has a unit
    entry on its own chord and zeros on the others, so L is read off the
    chord entries and then checked by exact reconstruction.
    """
    vec = [Fraction(x) for x in loop]
    if len(vec) != topo.loop.cols:
        raise ValueError("loop vector has the wrong length")
    coeffs = [vec[c] for c in topo.chords]
    rebuilt = [Fraction(0)] * len(vec)
    for i, c in enumerate(coeffs):
        if c:
            for j, x in enumerate(topo.loop.row(i)):
                rebuilt[j] += c * x
    if rebuilt != vec:
        raise NotACycle("signed branch set does not close into cycles")
    return coeffs


def connected_components(graph: CircuitGraph) -> int:
    return fundamental_matrices(graph).components
