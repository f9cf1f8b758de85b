"""Pfaff constraint matrix over the 2B branch differentials and its kernel.

Columns of every matrix here are ordered ``[dq_1..dq_B | dphi_1..dphi_B]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .exact_linalg import RationalMatrix, block_diag, kernel_basis, rank, rref
from .graph_topology import TopologyData, fundamental_matrices
from .netlist import BranchKind, CircuitGraph


class CoordKind(str, enum.Enum):
    CHARGE = "ChargeLike"
    FLUX = "FluxLike"
    MIXED = "Mixed"


class Compactness(str, enum.Enum):
    EXTENDED = "Extended"
    COMPACT = "Compact"
    POSSIBLY_COMPACT = "PossiblyCompact"


@dataclass(frozen=True)
class ScatteringGroup:
    """Raw constraint rows R(P+S) dq + (S-P) dphi = 0 on the listed branches."""

    branches: tuple[str, ...]
    impedance: Fraction
    s_matrix: RationalMatrix


@dataclass(frozen=True)
class PfaffSystem:
    f: RationalMatrix
    blocks: tuple[tuple[str, int, int], ...]  # (label, first row, end row)
    n_branches: int

    def block(self, label: str) -> RationalMatrix:
        rows = [i for name, a, b in self.blocks if name == label for i in range(a, b)]
        return self.f.submatrix(rows=rows)

    def labels(self) -> list[str]:
        return [name for name, a, b in self.blocks if b > a]


@dataclass(frozen=True)
class ReducedSpace:
    k: RationalMatrix
    coord_names: tuple[str, ...]
    coord_kind: tuple[CoordKind, ...]
    coord_compact: tuple[Compactness, ...]
    branch_order: tuple[str, ...]

    @property
    def dim(self) -> int:
        return self.k.cols


def _pad_rows(rows, width):
    return [list(r) + [0] * (width - len(r)) for r in rows]


def assemble_pfaff(graph: CircuitGraph, topo: TopologyData | None = None,
                   scattering: Sequence[ScatteringGroup] = ()) -> PfaffSystem:
    """Stack Kirchhoff, transformer, resistor, gyrator (and raw scattering) rows."""
    topo = topo or fundamental_matrices(graph)
    nb = len(graph.branches)
    zero = Fraction(0)
    rows: list[list[Fraction]] = []
    blocks = []

    def start():
        return len(rows)

    # Kirchhoff: diag(F_C, F_L)
    s = start()
    for r in topo.cutset.tolist():
        rows.append(r + [zero] * nb)
    for r in topo.loop.tolist():
        rows.append([zero] * nb + r)
    blocks.append(("Kirchhoff", s, len(rows)))

    s = start()
    for g in graph.groups:
        if g.kind != "transformer":
            continue
        idx = [graph.branch_index(m) for m in g.members]
        left, right = idx[: g.n_left], idx[g.n_left:]
        n = g.turns
        # current side (N | I): N i_left + i_right = 0
        for a in range(len(right)):
            row = [zero] * (2 * nb)
            for j, b in enumerate(left):
                row[b] = n[a, j]
            row[right[a]] = Fraction(1)
            rows.append(row)
        # voltage side (I | -N^T): v_left - N^T v_right = 0
        for j in range(len(left)):
            row = [zero] * (2 * nb)
            row[nb + left[j]] = Fraction(1)
            for a, b in enumerate(right):
                row[nb + b] = -n[a, j]
            rows.append(row)
    blocks.append(("Transformer", s, len(rows)))

    s = start()
    for b, br in enumerate(graph.branches):
        if br.kind is BranchKind.RESISTOR:
            row = [zero] * (2 * nb)
            row[b] = br.value
            row[nb + b] = Fraction(-1)
            rows.append(row)
    blocks.append(("Resistor", s, len(rows)))

    s = start()
    for g in graph.groups:
        if g.kind != "gyrator":
            continue
        idx = [graph.branch_index(m) for m in g.members]
        y = g.gyrator_admittance()
        for i, bi in enumerate(idx):
            row = [zero] * (2 * nb)
            row[bi] = Fraction(1)
            for j, bj in enumerate(idx):
                row[nb + bj] -= y[i, j]
            rows.append(row)
    blocks.append(("Gyrator", s, len(rows)))

    s = start()
    for sg in scattering:
        idx = [graph.branch_index(m) for m in sg.branches]
        sm = sg.s_matrix
        for i in range(len(idx)):
            row = [zero] * (2 * nb)
            for j, bj in enumerate(idx):
                p = Fraction(1) if i == j else zero
                row[bj] += sg.impedance * (p + sm[i, j])
                row[nb + bj] += sm[i, j] - p
            rows.append(row)
    blocks.append(("Scattering", s, len(rows)))

    f = RationalMatrix(len(rows), 2 * nb, rows) if rows else RationalMatrix(0, 2 * nb)
    return PfaffSystem(f, tuple(blocks), nb)


def coordinate_kind(column: Sequence[Fraction], nb: int) -> CoordKind:
    q = any(column[:nb])
    p = any(column[nb:])
    if q and not p:
        return CoordKind.CHARGE
    if p and not q:
        return CoordKind.FLUX
    return CoordKind.MIXED


def name_coordinates(kinds: Sequence[CoordKind]) -> tuple[str, ...]:
    counters = {CoordKind.CHARGE: 0, CoordKind.FLUX: 0, CoordKind.MIXED: 0}
    prefix = {CoordKind.CHARGE: "Q", CoordKind.FLUX: "Phi", CoordKind.MIXED: "z"}
    out = []
    for k in kinds:
        counters[k] += 1
        out.append(f"{prefix[k]}_{counters[k]}")
    return tuple(out)


def kernel_embedding(pfaff: PfaffSystem, graph: CircuitGraph | None = None,
                     topo: TopologyData | None = None) -> ReducedSpace:
    """Basis K of ker F, with each column tagged charge-like, flux-like or mixed.

    With Kirchhoff rows only, K = diag(F_L^T, F_C^T): loop charges then node
    fluxes. Otherwise K is the free-variable kernel basis of F computed with
    the flux columns eliminated first, so free variables fall on charges
    where possible (resistor rows then give charge-like coordinates).
    """
    nb = pfaff.n_branches
    only_kirchhoff = pfaff.labels() in ([], ["Kirchhoff"])
    if only_kirchhoff and graph is not None:
        topo = topo or fundamental_matrices(graph)
        k = block_diag(topo.loop.T, topo.cutset.T)
    else:
        k = flux_first_kernel(pfaff.f, nb)
    kinds = tuple(coordinate_kind(c, nb) for c in k.columns())
    order = tuple(b.id for b in graph.branches) if graph is not None else tuple(str(i) for i in range(nb))
    space = ReducedSpace(k, name_coordinates(kinds), kinds,
                         tuple(Compactness.EXTENDED for _ in kinds), order)
    if graph is not None:
        space = propagate_compactness(space, graph)
    return space


def flux_first_kernel(f: RationalMatrix, nb: int) -> RationalMatrix:
    """Kernel basis with later branches (fluxes before charges) eliminated first.

    The free variables are then the earliest-declared branch charges where
    possible; columns are ordered by the position of their free variable.
    """
    perm = list(range(2 * nb - 1, nb - 1, -1)) + list(range(nb - 1, -1, -1))
    fp = f.submatrix(cols=perm)
    kp = kernel_basis(fp)
    _, pivots = rref(fp)
    free = [c for c in range(2 * nb) if c not in set(pivots)]
    order = sorted(range(len(free)), key=lambda j: perm[free[j]])
    rows = [None] * (2 * nb)
    for i, p in enumerate(perm):
        r = kp.row(i)
        rows[p] = [r[j] for j in order]
    return RationalMatrix(2 * nb, kp.cols, rows)


def with_embedding(space: ReducedSpace, k: RationalMatrix, graph: CircuitGraph | None = None) -> ReducedSpace:
    """Same metadata recomputed for a replacement K (used for overrides and mutations)."""
    nb = k.rows // 2
    kinds = tuple(coordinate_kind(c, nb) for c in k.columns())
    out = replace(space, k=k, coord_names=name_coordinates(kinds), coord_kind=kinds,
                  coord_compact=tuple(Compactness.EXTENDED for _ in kinds))
    return propagate_compactness(out, graph) if graph is not None else out


def _projector_form(k: RationalMatrix, idx: Sequence[int], symmetric: bool) -> RationalMatrix:
    """K^T [[0, P],[P or 0, 0]] K for the projector P onto branch indices idx."""
    nb = k.rows // 2
    m = k.cols
    out = [[Fraction(0)] * m for _ in range(m)]
    for b in idx:
        qrow, prow = k.row(b), k.row(nb + b)
        for a in range(m):
            if not qrow[a] and not (symmetric and prow[a]):
                continue
            for c in range(m):
                v = qrow[a] * prow[c]
                if symmetric:
                    v += prow[a] * qrow[c]
                if v:
                    out[a][c] += v
    return RationalMatrix(m, m, out)


@dataclass
class TellegenReport:
    violations: list[str] = field(default_factory=list)
    checked: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def tellegen_check(space: ReducedSpace, graph: CircuitGraph) -> TellegenReport:
    """Global i.v = 0 on the embedding, plus local transformer and gyrator identities."""
    k = space.k
    nb = k.rows // 2
    report = TellegenReport()
    report.checked.append("global")
    if not _projector_form(k, range(nb), symmetric=False).is_zero():
        report.violations.append("global: K^T [[0,I],[0,0]] K != 0")
    t_idx = graph.indices_of(BranchKind.TRANSFORMER_PORT)
    if t_idx:
        report.checked.append("transformer")
        if not _projector_form(k, t_idx, symmetric=True).is_zero():
            report.violations.append("transformer: K^T [[0,P_T],[P_T,0]] K != 0")
    g_idx = graph.indices_of(BranchKind.GYRATOR_PORT)
    if g_idx:
        report.checked.append("gyrator")
        if not _projector_form(k, g_idx, symmetric=True).is_zero():
            report.violations.append("gyrator: K^T [[0,P_G],[P_G,0]] K != 0")
    return report


def compact_variables(graph: CircuitGraph) -> set[int]:
    """Row indices (into the 2B branch variables) of compact variables."""
    nb = len(graph.branches)
    out = set()
    for b, br in enumerate(graph.branches):
        if br.compact_charge:
            out.add(b)
        if br.compact_flux:
            out.add(nb + b)
    return out


def column_compactness(column: Sequence[Fraction], compact: set[int]) -> Compactness:
    """Compact when the column reaches exactly one compact variable with unit weight."""
    hits = [i for i, x in enumerate(column) if x and i in compact]
    if not hits:
        return Compactness.EXTENDED
    if len(hits) == 1 and abs(column[hits[0]]) == 1:
        return Compactness.COMPACT
    return Compactness.POSSIBLY_COMPACT


def propagate_compactness(space: ReducedSpace, graph: CircuitGraph) -> ReducedSpace:
    compact = compact_variables(graph)
    flags = tuple(column_compactness(c, compact) for c in space.k.columns())
    return replace(space, coord_compact=flags)


def pfaff_rank_check(pfaff: PfaffSystem, space: ReducedSpace) -> bool:
    """rank(F) + dim ker = 2B and F K = 0."""
    return rank(pfaff.f) + space.dim == 2 * pfaff.n_branches and (pfaff.f @ space.k).is_zero()
