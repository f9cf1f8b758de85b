from fractions import Fraction

import pytest
from hypothesis import given, settings

from conftest import circuit
from fjq.exact_linalg import RationalMatrix, matmul, rank, row_space_equal, transpose
from fjq.fj_reduction import flux_to_sources
from fjq.graph_topology import (
    NotACycle,
    connected_components,
    fundamental_matrices,
    incidence_matrix,
    loop_in_chord_basis,
    signed_loop_vector,
)
from fjq.netlist import BranchKind, parse_netlist
from strategies import circuits


def test_single_branch_incidence():
    g = parse_netlist("node a b\nbranch c1 cap a b C=1\n")
    assert incidence_matrix(g).tolist() == [[1], [-1]]
    topo = fundamental_matrices(g)
    assert topo.cutset.tolist() == [[1]]
    assert topo.loop.rows == 0
    assert topo.chords == ()


def test_series_loop_matrices():
    topo = fundamental_matrices(circuit("series_loop"))
    assert topo.cutset.tolist() == [[1, 0, 1], [0, 1, -1]]
    assert topo.loop.tolist() == [[-1, 1, 1]]
    assert topo.tree_branches == (0, 1)
    assert topo.chords == (2,)


def test_star_cutset_matches_kcl_rows():
    # one KCL row per perimeter node, each touching two capacitors and one inductor
    kcl = RationalMatrix.from_rows([
        [1, 0, -1, 1, 0, 0],
        [-1, 1, 0, 0, 1, 0],
        [0, -1, 1, 0, 0, 1],
    ])
    topo = fundamental_matrices(circuit("star"))
    assert topo.cutset.rows == 3
    assert row_space_equal(topo.cutset, kcl)
    assert topo.loop.rows == 3
    assert matmul(topo.loop, transpose(kcl)).is_zero()


def test_tree_has_no_loops():
    g = parse_netlist("node a b c d\nbranch x cap a b C=1\nbranch y ind b c L=1\nbranch z cap b d C=1\n")
    topo = fundamental_matrices(g)
    assert topo.loop.rows == 0
    assert topo.cutset.rows == 3


def test_disconnected_loops():
    text = (
        "node a b c d\n"
        "branch c1 cap a b C=1\nbranch l1 ind a b L=1\n"
        "branch c2 cap c d C=2\nbranch l2 ind c d L=3\n"
    )
    g = parse_netlist(text)
    assert connected_components(g) == 2
    topo = fundamental_matrices(g)
    assert topo.loop.rows == 2
    assert topo.cutset.rows == 2


def test_fundamental_loop_has_unit_chord_entry():
    topo = fundamental_matrices(circuit("star"))
    for i, c in enumerate(topo.chords):
        row = topo.loop.row(i)
        assert row[c] == 1
        assert all(row[d] == 0 for d in topo.chords if d != c)


def test_chord_loop_decomposes_to_unit_vector():
    topo = fundamental_matrices(circuit("star"))
    for i in range(topo.loop.rows):
        coeffs = loop_in_chord_basis(topo, topo.loop.row(i))
        assert coeffs == [Fraction(int(j == i)) for j in range(topo.loop.rows)]


def test_squid_inner_loop_decomposition():
    g = circuit("squid")
    topo = fundamental_matrices(g)
    vec = signed_loop_vector(g, [(1, "J1"), (-1, "J2")])
    # J1 is the tree branch, so the loop is minus the J2 chord loop
    assert loop_in_chord_basis(topo, vec) == [-1, 0, 0]


def test_non_cycle_is_rejected():
    g = circuit("series_loop")
    topo = fundamental_matrices(g)
    with pytest.raises(NotACycle):
        loop_in_chord_basis(topo, [1, 0, 0])
    with pytest.raises(ValueError):
        loop_in_chord_basis(topo, [1, 1])


def test_node_split_adds_one_node_and_one_source():
    g = circuit("squid")
    split = flux_to_sources(g)
    assert len(split.nodes) == len(g.nodes) + 1
    assert len(split.branches) == len(g.branches) + 1
    emf = split.branch("Fe_emf")
    assert emf.kind is BranchKind.VOLTAGE_SOURCE
    assert split.branch("J2").tail == split.branch("CJ2").tail == emf.head
    assert not split.external_fluxes


def test_chord_split_counts():
    # two fluxes, each threading one fundamental loop, give C_h = 2:
    # branches and nodes each grow by 2 while the chord count stays put
    text = (
        "node a b g\n"
        "branch C1 cap a g C=1\nbranch L1 ind a g L=1\nbranch L2 ind a b L=2\nbranch C2 cap b g C=3\n"
        "extflux F1 loop=+C1,-L1 waveform=sin:1,1,0\n"
        "extflux F2 loop=-L1,+L2,+C2 waveform=const:1/3\n"
    )
    g = parse_netlist(text)
    before = fundamental_matrices(g)
    out = flux_to_sources(g)
    after = fundamental_matrices(out)
    assert len(out.branches) == len(g.branches) + 2
    assert len(out.nodes) == len(g.nodes) + 2
    assert len(after.chords) == len(before.chords)
    sources = [b for b in out.branches if b.kind is BranchKind.VOLTAGE_SOURCE]
    assert len(sources) == 2


def test_loop_through_tree_splits_one_chord():
    text = (
        "node a b g\n"
        "branch C1 cap a g C=1\nbranch L1 ind a g L=1\nbranch L2 ind a b L=2\nbranch C2 cap b g C=3\n"
        "extflux F loop=+C1,-L2,-C2 waveform=const:1/2\n"
    )
    g = parse_netlist(text)
    topo = fundamental_matrices(g)
    vec = signed_loop_vector(g, [(1, "C1"), (-1, "L2"), (-1, "C2")])
    coeffs = loop_in_chord_basis(topo, vec)
    # chords are L1 and C2; the loop is minus the C2 fundamental loop
    assert coeffs == [0, -1]
    out = flux_to_sources(g)
    assert len(out.branches) == len(g.branches) + 1
    assert out.branch("C2_emf").kind is BranchKind.VOLTAGE_SOURCE


def test_zero_flux_leaves_graph_alone():
    g = parse_netlist(
        "node a g\nbranch L ind a g L=1\nbranch C cap a g C=1\n"
        "extflux F loop=+L,-C waveform=const:0\n"
    )
    out = flux_to_sources(g)
    assert out.branches == g.branches
    assert out.nodes == g.nodes


@settings(max_examples=100)
@given(circuits(groups=False))
def test_random_graph_counts(g):
    topo = fundamental_matrices(g)
    b = len(g.branches)
    n = len(g.nodes)
    assert topo.cutset.rows == n - topo.components
    assert topo.loop.rows == b - n + topo.components
    assert len(topo.tree_branches) + len(topo.chords) == b
    if topo.loop.rows and topo.cutset.rows:
        assert matmul(topo.loop, transpose(topo.cutset)).is_zero()
    assert rank(topo.loop) == topo.loop.rows


@settings(max_examples=50)
@given(circuits(groups=False))
def test_random_loops_reconstruct(g):
    topo = fundamental_matrices(g)
    if not topo.loop.rows:
        return
    # any integer combination of fundamental loops decomposes back to its weights
    weights = [Fraction((3 * i) % 5 - 2) for i in range(topo.loop.rows)]
    vec = [sum(w * topo.loop[i, j] for i, w in enumerate(weights)) for j in range(len(g.branches))]
    assert loop_in_chord_basis(topo, vec) == weights
