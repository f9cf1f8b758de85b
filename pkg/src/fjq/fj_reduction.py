"""Faddeev-Jackiw reduction of the first-order circuit Lagrangian.

The loop looks for zero modes of the reduced two-form, splits them into gauge
and dynamical directions, drops the gauge ones, solves the dynamical
constraints dH/dw = 0 and repeats until the two-form is nondegenerate or an
obstruction is found.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .constraint_assembly import (
    CoordKind,
    Compactness,
    ReducedSpace,
    assemble_pfaff,
    column_compactness,
    compact_variables,
    coordinate_kind,
    kernel_embedding,
)
from .energy_symbolics import (
    EnergyExpr,
    Implicit,
    LinearDependentOnVar,
    PiRational,
    Solution,
    SourceCoupling,
    Verdict,
    const,
    solve_extremum,
    total_energy,
    var,
)
from .exact_linalg import (
    RationalMatrix,
    canonical_block,
    darboux_congruence,
    inverse,
    kernel_basis,
    rank,
    rref,
)
from .graph_topology import (
    NotACycle,
    fundamental_matrices,
    incidence_matrix,
    loop_in_chord_basis,
    signed_loop_vector,
)
from .netlist import Branch, BranchKind, CircuitGraph, waveform_sum
from .symplectic_structure import build_structure

MAX_ROUNDS = 8


class ReductionError(RuntimeError):
    """The loop did not terminate within the round cap."""


class ObstructionKind(str, enum.Enum):
    TOPOLOGICAL = "TopologicalPhaseSpace"
    NON_HOMOGENEOUS_RANK = "NonHomogeneousRank"
    NON_INTEGRABLE = "NonIntegrable"
    UNRESOLVED_LINEAR = "UnresolvedLinearConstraint"


@dataclass(frozen=True)
class ObstructionReport:
    kind: ObstructionKind
    detail: str
    stage: int
    witness: EnergyExpr | None = None
    witness_text: str = ""
    witness_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class ZeroMode:
    """Kernel vector of the two-form, in the coordinates of its round."""

    vector: tuple[Fraction, ...]
    kind_hint: str  # PureCharge | PureFlux | Mixed
    classification: str | None = None  # Gauge | Dynamical
    constraint: EnergyExpr | None = None
    source_terms: tuple[Fraction, ...] = ()

    @property
    def is_gauge(self) -> bool:
        return self.classification == "Gauge"

    def constraint_text(self, names: Sequence[str], source_names: Sequence[str] = ()) -> str:
        body = self.constraint.to_text(names) if self.constraint is not None else "0"
        extra = [f"{_signed(c)}*{n}(t)" for c, n in zip(self.source_terms, source_names) if c]
        return " ".join([body] + extra) + " = 0"


def _signed(c: Fraction) -> str:
    return f"+ {c}" if c >= 0 else f"- {-c}"


@dataclass(frozen=True)
class Embedding:
    """Branch variables zeta = lin x + src s(t) + off (2B rows)."""

    lin: RationalMatrix
    src: RationalMatrix
    off: tuple[Fraction, ...]

    def column(self, j: int) -> list[Fraction]:
        return self.lin.col(j)

    def evaluate(self, x: Sequence[float], s: Sequence[float] = ()) -> list[float]:
        out = []
        for i in range(self.lin.rows):
            v = float(self.off[i])
            for j, a in enumerate(self.lin.row(i)):
                if a:
                    v += float(a) * x[j]
            if s:
                for k, a in enumerate(self.src.row(i)):
                    if a:
                        v += float(a) * s[k]
            out.append(v)
        return out


@dataclass(frozen=True)
class ImplicitCoordinate:
    """A zero coordinate resolved numerically from dH/dw + source terms = 0."""

    name: str
    index: int
    equation: EnergyExpr
    source_terms: tuple[Fraction, ...]
    verdict: str
    detail: str = ""


@dataclass(frozen=True)
class ReductionStep:
    round: int
    darboux_transform: RationalMatrix
    canonical_pairs: int
    modes: tuple[ZeroMode, ...]
    zero_coords: tuple[str, ...]
    gauge_dropped: tuple[str, ...]
    solved: tuple[tuple[str, str], ...]
    remaining_implicit: tuple[str, ...]
    note: str = ""


@dataclass(frozen=True)
class HamiltonianModel:
    names: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...]
    two_form: RationalMatrix
    poisson: RationalMatrix
    hamiltonian: EnergyExpr
    rayleigh: RationalMatrix
    sources: SourceCoupling
    implicit: tuple[ImplicitCoordinate, ...]
    embedding: Embedding
    branch_ids: tuple[str, ...]
    coord_kinds: tuple[CoordKind, ...]
    compact_flags: tuple[Compactness, ...]
    provenance: tuple[ReductionStep, ...] = ()
    advisories: tuple[ObstructionReport, ...] = ()
    gauge_modes: int = 0

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def n_canonical(self) -> int:
        return 2 * len(self.pairs)

    def branch_variable_names(self) -> list[str]:
        return [f"q_{b}" for b in self.branch_ids] + [f"phi_{b}" for b in self.branch_ids]


# ---------------------------------------------------------------------------
# state carried between rounds


@dataclass
class ReductionState:
    e: RationalMatrix
    f: RationalMatrix
    h: EnergyExpr
    sources: SourceCoupling
    embedding: Embedding
    branch_ids: tuple[str, ...]
    compact: set[int]
    implicit: list[ImplicitCoordinate] = field(default_factory=list)
    steps: list[ReductionStep] = field(default_factory=list)
    gauge_count: int = 0
    round: int = 0

    @property
    def dim(self) -> int:
        return self.e.rows

    @property
    def nb(self) -> int:
        return len(self.branch_ids)

    def names(self) -> list[str]:
        return coordinate_names(self.embedding, self.dim, len(self.implicit))


def coordinate_names(emb: Embedding, n_canonical: int, n_implicit: int) -> list[str]:
    nb = emb.lin.rows // 2
    kinds = [coordinate_kind(emb.column(j), nb) for j in range(n_canonical)]
    counters = {CoordKind.CHARGE: 0, CoordKind.FLUX: 0, CoordKind.MIXED: 0}
    prefix = {CoordKind.CHARGE: "Q", CoordKind.FLUX: "Phi", CoordKind.MIXED: "z"}
    out = []
    for k in kinds:
        counters[k] += 1
        out.append(f"{prefix[k]}_{counters[k]}")
    out += [f"w_{i + 1}" for i in range(n_implicit)]
    return out


def initial_state(graph: CircuitGraph, space: ReducedSpace | None = None,
                  offsets: Sequence | None = None) -> ReductionState:
    """Topology, constraints, structure and total energy packed for the loop."""
    if space is None:
        space = kernel_embedding(assemble_pfaff(graph), graph)
    bundle = build_structure(space, graph)
    energy = total_energy(graph, space, offsets)
    nb = len(graph.branches)
    emb = Embedding(space.k, RationalMatrix(2 * nb, len(bundle.sources)), energy.offsets)
    return ReductionState(
        bundle.e_reduced, bundle.rayleigh, energy.h, bundle.sources, emb,
        tuple(b.id for b in graph.branches), compact_variables(graph),
    )


# ---------------------------------------------------------------------------
# zero modes and their classification


def _kind_hint(column: Sequence[Fraction], nb: int) -> str:
    k = coordinate_kind(column, nb)
    return {CoordKind.CHARGE: "PureCharge", CoordKind.FLUX: "PureFlux"}.get(k, "Mixed")


def zero_modes(e_reduced: RationalMatrix, embedding: RationalMatrix | None = None) -> list[ZeroMode]:
    """Basis of ker(e_reduced). ``embedding`` (2B x M) supplies the kind hint."""
    if not e_reduced.is_antisymmetric():
        raise ValueError("two-form must be antisymmetric")
    ker = kernel_basis(e_reduced)
    out = []
    for col in ker.columns():
        if embedding is not None:
            branch_dir = [sum(embedding[i, j] * col[j] for j in range(len(col))) for i in range(embedding.rows)]
            hint = _kind_hint(branch_dir, embedding.rows // 2)
        else:
            hint = "Mixed"
        out.append(ZeroMode(tuple(col), hint))
    return out


def directional(h: EnergyExpr, v: Sequence[Fraction]) -> EnergyExpr:
    out = EnergyExpr()
    for j, a in enumerate(v):
        if a:
            out = out + h.diff(j).scale(a)
    return out


def _source_slopes(sources: SourceCoupling, v: Sequence[Fraction]) -> tuple[Fraction, ...]:
    out = []
    for sig in sources.exprs:
        d = directional(sig, v)
        if not d.is_constant() or not d.constant_term().is_rational():
            raise ValueError("source coupling must be affine with rational coefficients")
        out.append(d.constant_term().as_fraction())
    return tuple(out)


def classify(mode: ZeroMode, h: EnergyExpr, sources: SourceCoupling | None = None) -> ZeroMode:
    """Gauge iff W.grad(H + S.z) vanishes identically (inactive sources ignored)."""
    sources = sources or SourceCoupling.empty()
    c = directional(h, mode.vector)
    slopes = _source_slopes(sources, mode.vector)
    active = set(sources.active())
    live = tuple(s if k in active else Fraction(0) for k, s in enumerate(slopes))
    gauge = c.is_zero() and not any(live)
    return replace(mode, classification="Gauge" if gauge else "Dynamical",
                   constraint=c, source_terms=live)


def gauge_subspace(vectors: Sequence[Sequence[Fraction]], h: EnergyExpr,
                   sources: SourceCoupling | None = None) -> RationalMatrix:
    """Coefficient basis c with sum_i c_i W_i a gauge direction.

    Each directional derivative is a finite sum of (monomial, trig, pi-power)
    terms with rational coefficients, so the identity sum_i c_i dH/dW_i == 0
    is a rational linear system with one row per term.
    """
    sources = sources or SourceCoupling.empty()
    n = len(vectors)
    table: dict = {}
    for i, v in enumerate(vectors):
        for key, coeff in directional(h, v).items():
            for k, x in coeff.terms:
                table.setdefault((key, k), [Fraction(0)] * n)[i] += x
    active = set(sources.active())
    for i, v in enumerate(vectors):
        for k, s in enumerate(_source_slopes(sources, v)):
            if k in active and s:
                table.setdefault(("source", k), [Fraction(0)] * n)[i] += s
    if not table:
        return RationalMatrix.identity(n)
    keys = sorted(table, key=repr)
    return kernel_basis(RationalMatrix(len(keys), n, [table[k] for k in keys]))


# ---------------------------------------------------------------------------
# branch-variable witness for a singular Jacobian


def _det(m: list[list[EnergyExpr]]) -> EnergyExpr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    out = EnergyExpr()
    for j in range(n):
        if m[0][j].is_zero():
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * _det(minor)
        out = out + term if j % 2 == 0 else out - term
    return out


def branch_witness(graph: CircuitGraph, state: ReductionState, wvars: Sequence[int]) -> EnergyExpr | None:
    """det of J^T diag(h_b'') J over branch variables, normalised by its constant term.

    J holds the embedding rows of the energy-carrying branches restricted to
    the zero coordinates. The result is an expression in the 2B branch
    variables (charges first, then fluxes), e.g. 1 + beta cos(phi_J).
    """
    nb = len(graph.branches)
    rows, curv = [], []
    for b, br in enumerate(graph.branches):
        if br.energy is None:
            continue
        r = b if br.kind.is_charge_energy else nb + b
        jrow = [state.embedding.lin[r, w] for w in wvars]
        if not any(jrow):
            continue
        rows.append(jrow)
        curv.append(br.energy.diff(0).diff(0).substitute({0: var(r)}))
    n = len(wvars)
    if n > 6 or not rows:
        return None
    mat = [[EnergyExpr() for _ in range(n)] for _ in range(n)]
    for jrow, d in zip(rows, curv):
        for a in range(n):
            for c in range(n):
                if jrow[a] and jrow[c]:
                    mat[a][c] = mat[a][c] + d.scale(jrow[a] * jrow[c])
    det = _det(mat)
    c0 = det.constant_term()
    if c0 and c0.is_monomial():
        det = det.scale(c0.inverse())
    return det


# ---------------------------------------------------------------------------
# one round


def _complete_basis(gauge: list[list[Fraction]], candidates: list[list[Fraction]]) -> list[list[Fraction]]:
    chosen, cur = [], list(gauge)
    for v in candidates:
        trial = cur + [v]
        if rank(RationalMatrix.from_columns(trial, len(v))) == len(trial):
            cur = trial
            chosen.append(v)
    return chosen



def adapted_darboux(e: RationalMatrix, f: RationalMatrix) -> tuple[RationalMatrix, int, int]:
    """Darboux basis that starts from dissipation-free directions.

    Symplectic Gram-Schmidt runs on a basis whose leading vectors span
    ker(F), so momenta are picked where the Rayleigh form vanishes and the
    dissipation ends up on the position velocities.
    """
    n = e.rows
    if f.is_zero():
        return darboux_congruence(e)
    lead = [list(c) for c in kernel_basis(f).columns()]
    basis = _complete_basis(lead, [_unit(j, n) for j in range(n)])
    b = RationalMatrix.from_columns(lead + basis, n)
    s, p, z = darboux_congruence(b.T @ e @ b)
    return b @ s, p, z


def _select(mat: RationalMatrix, rows: Sequence[int], cols: Sequence[int]) -> RationalMatrix:
    return mat.submatrix(rows=list(rows), cols=list(cols))


def reduce_once(state: ReductionState, graph: CircuitGraph | None = None) -> ReductionState | ObstructionReport:
    """One elimination round; returns the new state or an obstruction."""
    stage = state.round
    n = state.dim
    n_impl = len(state.implicit)
    modes = zero_modes(state.e, state.embedding.lin.submatrix(cols=list(range(n))))
    if not modes:
        return state
    kernel = [list(m.vector) for m in modes]

    # a zero mode of E that the Rayleigh form still sees is not a constraint
    for v in kernel:
        fv = [sum(state.f[i, j] * v[j] for j in range(n)) for i in range(n)]
        if any(fv):
            return ObstructionReport(
                ObstructionKind.UNRESOLVED_LINEAR,
                "zero mode of the two-form is dissipative (Rayleigh form acts on it)",
                stage)

    g = gauge_subspace(kernel, state.h, state.sources)
    gauge = [[sum(g[i, c] * kernel[i][a] for i in range(len(kernel))) for a in range(n)] for c in range(g.cols)]
    dynamical = _complete_basis(gauge, kernel)

    s0, p, _ = adapted_darboux(state.e, state.f)
    sym_cols = [s0.col(j) for j in range(2 * p)]
    cols = sym_cols + gauge + dynamical
    s = RationalMatrix.from_columns(cols, n)
    n_g, n_d = len(gauge), len(dynamical)

    # change of variables x_old = S x_new  (implicit coordinates ride along untouched)
    total_new = n + n_impl
    rows = []
    for i in range(n):
        rows.append(list(s.row(i)) + [Fraction(0)] * n_impl)
    for k in range(n_impl):
        r = [Fraction(0)] * total_new
        r[n + k] = Fraction(1)
        rows.append(r)
    h1 = state.h.substitute_affine(rows)
    src1 = state.sources.substitute_affine(rows)
    e1 = s.T @ state.e @ s
    f1 = s.T @ state.f @ s
    lin1 = state.embedding.lin.submatrix(cols=list(range(n))) @ s
    impl1 = [replace(c, equation=c.equation.substitute_affine(rows)) for c in state.implicit]

    mode_objs = []
    for j in range(2 * p, n):
        vec = tuple(cols[j])
        branch_dir = lin1.col(j)
        mode_objs.append(classify(ZeroMode(vec, _kind_hint(branch_dir, state.nb)), state.h, state.sources))
    new_names_tmp = [f"x_{j + 1}" for j in range(total_new)]

    gauge_idx = list(range(2 * p, 2 * p + n_g))
    dyn_idx = list(range(2 * p + n_g, n))
    keep = list(range(2 * p))

    solved_text: list[tuple[str, str]] = []
    note = ""
    new_implicit: list[tuple[int, EnergyExpr, tuple[Fraction, ...], str, str]] = []
    subs: dict[int, EnergyExpr] = {i: const(0) for i in gauge_idx}
    gain_rows: dict[int, list[Fraction]] = {}
    if dyn_idx:
        try:
            res = solve_extremum(h1, dyn_idx, src1)
        except LinearDependentOnVar as exc:
            return ObstructionReport(
                ObstructionKind.UNRESOLVED_LINEAR,
                f"constraint does not fix the zero coordinate: {exc}", stage)
        affine_ok = isinstance(res, Solution) and all(
            res.subs[w].is_affine() and not (res.subs[w].variables() & set(range(n, total_new)))
            for w in dyn_idx)
        if affine_ok:
            for i, w in enumerate(dyn_idx):
                subs[w] = res.subs[w]
                gain_rows[w] = list(res.source_gain.row(i))
                solved_text.append((f"w{i + 1}", res.subs[w].to_text(new_names_tmp)))
        else:
            if isinstance(res, Solution):
                grads = tuple(h1.diff(w) for w in dyn_idx)
                verdict, detail = Verdict.INVERTIBLE, "constant invertible curvature"
                src_terms = [tuple(_source_slopes(src1, _unit(w, total_new))) for w in dyn_idx]
            else:
                grads = res.equations
                verdict, detail = res.invertibility, res.detail
                src_terms = [tuple(res.source_terms.row(i)) for i in range(len(dyn_idx))]
            witness = None
            if graph is not None:
                st = replace(state, embedding=replace(state.embedding, lin=_pad_cols(lin1, total_new)))
                witness = branch_witness(graph, st, dyn_idx)
            if verdict != Verdict.INVERTIBLE and witness is not None:
                bnd = witness.bounds()
                if bnd is not None and bnd[0] > 0:
                    verdict, detail = Verdict.INVERTIBLE, "Jacobian determinant bounded away from zero"
            if verdict != Verdict.INVERTIBLE:
                bnames = _branch_names(state.branch_ids)
                wtext = witness.to_text(bnames) if witness is not None else ""
                return ObstructionReport(
                    ObstructionKind.NON_HOMOGENEOUS_RANK,
                    "Jacobian of the zero-mode constraints can vanish; " + detail,
                    stage, witness, wtext, tuple(bnames))
            note = "implicit constraints solved in declaration order"
            for i, w in enumerate(dyn_idx):
                new_implicit.append((w, grads[i], src_terms[i], verdict, detail))

    # assemble the next state: canonical coords, then old implicit, then new implicit
    impl_new_idx = [w for w, *_ in new_implicit]
    order = keep + list(range(n, total_new)) + impl_new_idx
    remap = {old: k for k, old in enumerate(order)}
    final_subs = {}
    for old in range(total_new):
        if old in remap:
            final_subs[old] = var(remap[old])
    for w, ex in subs.items():
        final_subs[w] = ex.rename(remap) if ex.variables() else ex

    def push(ex: EnergyExpr) -> EnergyExpr:
        return ex.substitute(final_subs)

    h2 = push(h1)
    src2 = SourceCoupling(src1.names, tuple(push(x) for x in src1.exprs), src1.waveforms).drop_constants()
    # embedding: zeta = lin1 x + src s + off, with x_w = subs_w(x) + gain_w s
    nb2 = 2 * state.nb
    n_out = len(order)
    lin2 = [[Fraction(0)] * n_out for _ in range(nb2)]
    off2 = list(state.embedding.off)
    srcm = [list(state.embedding.src.row(i)) for i in range(nb2)]
    for i in range(nb2):
        for j in range(n):
            a = lin1[i, j]
            if not a:
                continue
            if j in remap:
                lin2[i][remap[j]] += a
            elif j in subs:
                ex = subs[j]
                off2[i] += a * ex.constant_term().as_fraction()
                for v in ex.variables():
                    lin2[i][remap[v]] += a * ex.linear_coefficient(v).as_fraction()
                for k, gk in enumerate(gain_rows.get(j, [])):
                    srcm[i][k] += a * gk
    old_impl_lin = state.embedding.lin.submatrix(cols=list(range(n, n + n_impl))) if n_impl else None
    if old_impl_lin is not None:
        for i in range(nb2):
            for k in range(n_impl):
                lin2[i][remap[n + k]] += old_impl_lin[i, k]
    n_src = len(src1)
    new_emb = Embedding(
        RationalMatrix(nb2, n_out, lin2),
        RationalMatrix(nb2, n_src, srcm) if n_src else RationalMatrix(nb2, 0),
        tuple(off2),
    )
    e2 = _select(e1, keep, keep)
    f2 = _select(f1, keep, keep)
    implicit = [replace(c, index=remap[n + k], equation=push(c.equation)) for k, c in enumerate(impl1)]
    for w, eq, st_, verdict, detail in new_implicit:
        implicit.append(ImplicitCoordinate("", remap[w], push(eq), st_, verdict, detail))
    implicit = [replace(c, name=f"w_{i + 1}") for i, c in enumerate(implicit)]

    zero_names = [f"x_{j + 1}" for j in range(2 * p, n)]
    step = ReductionStep(
        stage, s, p, tuple(mode_objs), tuple(zero_names),
        tuple(f"x_{j + 1}" for j in gauge_idx), tuple(solved_text),
        tuple(f"x_{w + 1}" for w in impl_new_idx), note)
    return ReductionState(
        e2, f2, h2, src2, new_emb, state.branch_ids, state.compact, implicit,
        state.steps + [step], state.gauge_count + n_g, stage + 1)


def _unit(j: int, n: int) -> list[Fraction]:
    v = [Fraction(0)] * n
    v[j] = Fraction(1)
    return v


def _pad_cols(m: RationalMatrix, n: int) -> RationalMatrix:
    rows = [list(m.row(i)) + [Fraction(0)] * (n - m.cols) for i in range(m.rows)]
    return RationalMatrix(m.rows, n, rows)


def _branch_names(ids: Sequence[str]) -> list[str]:
    return [f"q_{b}" for b in ids] + [f"phi_{b}" for b in ids]


# ---------------------------------------------------------------------------
# driver


def _finalize(state: ReductionState) -> HamiltonianModel:
    n = state.dim
    p = n // 2
    if state.e != canonical_block(p, 0):
        s, p2, z = adapted_darboux(state.e, state.f)
        if z:
            raise ReductionError("final two-form is degenerate")
        rows = [list(s.row(i)) + [Fraction(0)] * len(state.implicit) for i in range(n)]
        for k in range(len(state.implicit)):
            rows.append(_unit(n + k, n + len(state.implicit)))
        state = replace(
            state,
            e=s.T @ state.e @ s,
            f=s.T @ state.f @ s,
            h=state.h.substitute_affine(rows),
            sources=state.sources.substitute_affine(rows),
            embedding=replace(state.embedding, lin=state.embedding.lin @ RationalMatrix.from_rows(rows)),
            implicit=[replace(c, equation=c.equation.substitute_affine(rows)) for c in state.implicit],
        )
    names = state.names()
    nb = state.nb
    kinds = tuple(coordinate_kind(state.embedding.column(j), nb) for j in range(len(names)))
    flags = tuple(column_compactness(state.embedding.column(j), state.compact) for j in range(len(names)))
    pairs = tuple((names[p + i], names[i]) for i in range(p))
    poisson = inverse(state.e) if n else RationalMatrix(0, 0)
    advisories = []
    for j in range(n):
        if flags[j] is Compactness.COMPACT:
            advisories.append(ObstructionReport(
                ObstructionKind.TOPOLOGICAL,
                f"coordinate {names[j]} is compact and survives into a canonical pair",
                state.round))
    return HamiltonianModel(
        tuple(names), pairs, state.e, poisson, state.h, state.f, state.sources,
        tuple(state.implicit), state.embedding, state.branch_ids, kinds, flags,
        tuple(state.steps), tuple(advisories), state.gauge_count)


def run_reduction(graph: CircuitGraph, space: ReducedSpace | None = None,
                  offsets: Sequence | None = None) -> HamiltonianModel | ObstructionReport:
    """Full pipeline from a validated graph to a Hamiltonian model or an obstruction.

    External fluxes are converted to emf sources first.
    """
    if graph.external_fluxes:
        graph = flux_to_sources(graph)
        space = None
    state = initial_state(graph, space, offsets)
    for _ in range(MAX_ROUNDS):
        if rank(state.e) == state.dim:
            return _finalize(state)
        out = reduce_once(state, graph)
        if isinstance(out, ObstructionReport):
            return out
        state = out
    raise ReductionError(f"no full-rank two-form after {MAX_ROUNDS} rounds")


# ---------------------------------------------------------------------------
# energy-minimum offsets


def minimum_offsets(graph: CircuitGraph, space: ReducedSpace, offsets: Sequence | None = None) -> tuple[Fraction, ...]:
    """Offsets moved so that z = 0 is a stationary point of a quadratic H."""
    energy = total_energy(graph, space, offsets)
    h = energy.h
    if not h.is_polynomial() or h.degree() > 2:
        raise ValueError("energy-minimum shift needs a quadratic energy")
    m = space.dim
    zero = {j: const(0) for j in range(m)}
    grads = [h.diff(j) for j in range(m)]
    rows = []
    for gj in grads:
        if not all(c.is_rational() for _, c in gj.items()):
            raise ValueError("energy coefficients must be rational for the shift")
        row = [gj.linear_coefficient(k).as_fraction() for k in range(m)]
        rows.append(row + [-gj.substitute(zero).constant_term().as_fraction()])
    aug = RationalMatrix(m, m + 1, rows)
    r, piv = rref(aug)
    if m in piv:
        raise ValueError("energy has no stationary point")
    z = [Fraction(0)] * m
    for i, pc in enumerate(piv):
        z[pc] = r[i, m]
    shift = [sum(space.k[i, j] * z[j] for j in range(m)) for i in range(space.k.rows)]
    return tuple(a + b for a, b in zip(energy.offsets, shift))


# ---------------------------------------------------------------------------
# external fluxes as emf sources


def _split_node(graph: CircuitGraph, node: str, moved: Sequence[str], loop_vec: list[Fraction],
                src_id: str, new_node: str, flux_wave) -> CircuitGraph:
    """Move ``moved`` branches from ``node`` to a new node and bridge the two with an emf.

    The source orientation is chosen so that the signed sum of branch fluxes
    over the declared loop equals the external flux.
    """
    branches = []
    for br in graph.branches:
        if br.id in moved:
            br = replace(br, tail=new_node if br.tail == node else br.tail,
                         head=new_node if br.head == node else br.head)
        branches.append(br)
    src = Branch(src_id, BranchKind.VOLTAGE_SOURCE, node, new_node, waveform=flux_wave.derivative())
    trial = replace(graph, nodes=graph.nodes + (new_node,), branches=tuple(branches) + (src,))
    a = incidence_matrix(trial)
    base = loop_vec + [Fraction(0)]
    sign = None
    for s in (Fraction(1), Fraction(-1)):
        vec = base[:-1] + [s]
        if all(sum(a[i, j] * vec[j] for j in range(a.cols)) == 0 for i in range(a.rows)):
            sign = s
            break
    if sign is None:
        raise NotACycle(f"split at {node!r} does not cut the loop of {src_id!r} exactly once")
    if sign == 1:  # flip so the loop traverses the source backwards: sum_l phi = phi_src
        src = replace(src, tail=new_node, head=node)
    return replace(trial, branches=tuple(branches) + (src,))


def flux_to_sources(graph: CircuitGraph) -> CircuitGraph:
    """Replace every external flux by series emf sources with V = d(flux)/dt.

    Declarations with ``split`` use a node split at the named node. The
    rest are decomposed over the fundamental loops; each chord with a
    nonzero component is broken by a new node into the original element
    and a source.
    """
    if not graph.external_fluxes:
        return graph
    out = replace(graph, external_fluxes=())
    topo = fundamental_matrices(graph)
    chord_waves: dict[int, list] = {}
    node_splits = []
    for x in graph.external_fluxes:
        vec = signed_loop_vector(graph, x.loop)
        coeffs = loop_in_chord_basis(topo, vec)
        if x.waveform.is_zero():
            continue
        if x.split is not None:
            node_splits.append((x, vec))
            continue
        for i, c in enumerate(coeffs):
            if c:
                chord_waves.setdefault(topo.chords[i], []).append(x.waveform.scale(c))
    for x, vec in node_splits:
        node, moved = x.split
        pad = vec + [Fraction(0)] * (len(out.branches) - len(vec))
        out = _split_node(out, node, moved, pad, f"{x.id}_emf", f"{node}_{x.id}", x.waveform)
    for chord in sorted(chord_waves):
        wave = waveform_sum(chord_waves[chord])
        if wave.is_zero():
            continue
        br = graph.branches[chord]
        fvec = [Fraction(0)] * len(out.branches)
        row = topo.loop.row(topo.chords.index(chord))
        for j, a in enumerate(row):
            fvec[j] = a
        out = _split_node(out, br.tail, [br.id], fvec, f"{br.id}_emf", f"{br.id}_split", wave)
    return out
