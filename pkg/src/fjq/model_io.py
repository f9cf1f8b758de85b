"""Exact JSON documents for reduced models and obstructions, plus text summaries.

Rationals are written as ``"p/q"`` strings, sums of pi powers as
``[[k, "p/q"], ...]``; keys are sorted so output is byte-stable. Documents
carry a display section (canonical text, quadratic forms) that the loader
ignores because it is recomputed from the exact data.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .constraint_assembly import Compactness, CoordKind
from .energy_symbolics import Affine, EnergyExpr, PiRational, SourceCoupling, const
from .exact_linalg import RationalMatrix
from .fj_reduction import (
    Embedding,
    HamiltonianModel,
    ImplicitCoordinate,
    ObstructionKind,
    ObstructionReport,
    ReductionStep,
    ZeroMode,
)
from .netlist import parse_waveform

SCHEMA_VERSION = 1
EXTENSION = ".fjq.json"


class DocumentError(ValueError):
    """Malformed or unsupported model document."""


# ---------------------------------------------------------------------------
# scalars, matrices, expressions


def _q(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _unq(s: str) -> Fraction:
    return Fraction(s)


def _pr(c: PiRational) -> list:
    return [[k, _q(v)] for k, v in c.terms]


def _unpr(data) -> PiRational:
    return PiRational({int(k): _unq(v) for k, v in data})


def _mat(m: RationalMatrix) -> dict:
    return {"rows": m.rows, "cols": m.cols, "data": [[_q(x) for x in m.row(i)] for i in range(m.rows)]}


def _unmat(d) -> RationalMatrix:
    return RationalMatrix(d["rows"], d["cols"], [[_unq(x) for x in r] for r in d["data"]])


def _affine(a: Affine) -> dict:
    return {"linear": [[v, _pr(c)] for v, c in a.linear], "offset": _pr(a.offset)}


def _unaffine(d) -> Affine:
    return Affine([(int(v), _unpr(c)) for v, c in d["linear"]], _unpr(d["offset"]))


def expr_to_data(e: EnergyExpr) -> list:
    out = []
    for (mono, trig), c in e.items():
        out.append({
            "coeff": _pr(c),
            "mono": [[v, p] for v, p in mono],
            "trig": None if trig is None else {"kind": trig[0], "arg": _affine(trig[1])},
        })
    out.sort(key=lambda t: json.dumps(t, sort_keys=True))
    return out


def expr_from_data(data) -> EnergyExpr:
    terms = {}
    for t in data:
        mono = tuple((int(v), int(p)) for v, p in t["mono"])
        trig = None if t["trig"] is None else (t["trig"]["kind"], _unaffine(t["trig"]["arg"]))
        terms[(mono, trig)] = _unpr(t["coeff"])
    return EnergyExpr(terms)


def _expr_doc(e: EnergyExpr, names) -> dict:
    return {"terms": expr_to_data(e), "text": e.to_text(list(names))}


# ---------------------------------------------------------------------------
# composite objects


def _obstruction(r: ObstructionReport) -> dict:
    return {
        "kind": r.kind.value,
        "detail": r.detail,
        "stage": r.stage,
        "witness": None if r.witness is None else _expr_doc(r.witness, r.witness_names or _names_for(r.witness)),
        "witness_text": r.witness_text,
        "witness_names": list(r.witness_names),
    }


def _names_for(e: EnergyExpr) -> list[str]:
    return [f"x{i}" for i in range(max(e.variables(), default=-1) + 1)]


def _unobstruction(d) -> ObstructionReport:
    w = None if d["witness"] is None else expr_from_data(d["witness"]["terms"])
    return ObstructionReport(ObstructionKind(d["kind"]), d["detail"], d["stage"], w,
                             d["witness_text"], tuple(d["witness_names"]))


def _mode(m: ZeroMode) -> dict:
    return {
        "vector": [_q(x) for x in m.vector],
        "kind_hint": m.kind_hint,
        "classification": m.classification,
        "constraint": None if m.constraint is None else expr_to_data(m.constraint),
        "source_terms": [_q(x) for x in m.source_terms],
    }


def _unmode(d) -> ZeroMode:
    return ZeroMode(
        tuple(_unq(x) for x in d["vector"]), d["kind_hint"], d["classification"],
        None if d["constraint"] is None else expr_from_data(d["constraint"]),
        tuple(_unq(x) for x in d["source_terms"]))


def _step(s: ReductionStep) -> dict:
    return {
        "round": s.round,
        "darboux_transform": _mat(s.darboux_transform),
        "canonical_pairs": s.canonical_pairs,
        "modes": [_mode(m) for m in s.modes],
        "zero_coords": list(s.zero_coords),
        "gauge_dropped": list(s.gauge_dropped),
        "solved": [list(x) for x in s.solved],
        "remaining_implicit": list(s.remaining_implicit),
        "note": s.note,
    }


def _unstep(d) -> ReductionStep:
    return ReductionStep(
        d["round"], _unmat(d["darboux_transform"]), d["canonical_pairs"],
        tuple(_unmode(m) for m in d["modes"]), tuple(d["zero_coords"]),
        tuple(d["gauge_dropped"]), tuple(tuple(x) for x in d["solved"]),
        tuple(d["remaining_implicit"]), d["note"])


def quadratic_form(e: EnergyExpr, n: int) -> RationalMatrix | None:
    """Hessian of a quadratic polynomial with rational coefficients, else None."""
    if not e.is_polynomial() or e.degree() > 2:
        return None
    rows = []
    for i in range(n):
        gi = e.diff(i)
        row = []
        for j in range(n):
            c = gi.diff(j).constant_term()
            if not c.is_rational():
                return None
            row.append(c.as_fraction())
        rows.append(row)
    return RationalMatrix(n, n, rows)


def _model(m: HamiltonianModel) -> dict:
    names = list(m.names)
    n = m.n_canonical
    display = {"hamiltonian": m.hamiltonian.to_text(names)}
    qf = quadratic_form(m.hamiltonian, len(names))
    if qf is not None:
        display["hessian"] = _mat(qf)
    display["rayleigh"] = rayleigh_text(m)
    return {
        "names": names,
        "pairs": [list(p) for p in m.pairs],
        "two_form": _mat(m.two_form),
        "poisson": _mat(m.poisson),
        "hamiltonian": expr_to_data(m.hamiltonian),
        "rayleigh": _mat(m.rayleigh),
        "sources": {
            "names": list(m.sources.names),
            "exprs": [expr_to_data(e) for e in m.sources.exprs],
            "waveforms": [w.to_text() for w in m.sources.waveforms],
        },
        "implicit": [
            {"name": c.name, "index": c.index, "equation": expr_to_data(c.equation),
             "source_terms": [_q(x) for x in c.source_terms], "verdict": c.verdict, "detail": c.detail}
            for c in m.implicit
        ],
        "embedding": {"lin": _mat(m.embedding.lin), "src": _mat(m.embedding.src),
                      "off": [_q(x) for x in m.embedding.off]},
        "branch_ids": list(m.branch_ids),
        "coord_kinds": [k.value for k in m.coord_kinds],
        "compact_flags": [c.value for c in m.compact_flags],
        "provenance": [_step(s) for s in m.provenance],
        "advisories": [_obstruction(a) for a in m.advisories],
        "gauge_modes": m.gauge_modes,
        "display": display,
        "summary": {"canonical_pairs": len(m.pairs), "gauge_modes": m.gauge_modes,
                    "implicit": len(m.implicit), "dimension": n},
    }


def _unmodel(d) -> HamiltonianModel:
    src = d["sources"]
    sources = SourceCoupling(tuple(src["names"]), tuple(expr_from_data(e) for e in src["exprs"]),
                             tuple(parse_waveform(w) for w in src["waveforms"]))
    emb = d["embedding"]
    return HamiltonianModel(
        tuple(d["names"]), tuple(tuple(p) for p in d["pairs"]), _unmat(d["two_form"]),
        _unmat(d["poisson"]), expr_from_data(d["hamiltonian"]), _unmat(d["rayleigh"]), sources,
        tuple(ImplicitCoordinate(c["name"], c["index"], expr_from_data(c["equation"]),
                                 tuple(_unq(x) for x in c["source_terms"]), c["verdict"], c["detail"])
              for c in d["implicit"]),
        Embedding(_unmat(emb["lin"]), _unmat(emb["src"]), tuple(_unq(x) for x in emb["off"])),
        tuple(d["branch_ids"]), tuple(CoordKind(k) for k in d["coord_kinds"]),
        tuple(Compactness(c) for c in d["compact_flags"]),
        tuple(_unstep(s) for s in d["provenance"]),
        tuple(_unobstruction(a) for a in d["advisories"]), d["gauge_modes"])


# ---------------------------------------------------------------------------
# public API


def to_document(result: HamiltonianModel | ObstructionReport) -> dict:
    if isinstance(result, HamiltonianModel):
        return {"schema_version": SCHEMA_VERSION, "kind": "model", "model": _model(result)}
    if isinstance(result, ObstructionReport):
        return {"schema_version": SCHEMA_VERSION, "kind": "obstruction", "obstruction": _obstruction(result)}
    raise TypeError(f"cannot serialise {type(result).__name__}")


def emit_document(result: HamiltonianModel | ObstructionReport) -> str:
    return json.dumps(to_document(result), sort_keys=True, indent=2) + "\n"


def load_document(text: str) -> HamiltonianModel | ObstructionReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"not JSON: {exc}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DocumentError(f"unsupported schema_version {doc.get('schema_version')!r}")
    try:
        if doc["kind"] == "model":
            return _unmodel(doc["model"])
        if doc["kind"] == "obstruction":
            return _unobstruction(doc["obstruction"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed document: {exc}") from None
    raise DocumentError(f"unknown document kind {doc['kind']!r}")


def write_document(result, path) -> None:
    with open(path, "w") as fh:
        fh.write(emit_document(result))


def read_document(path):
    with open(path) as fh:
        return load_document(fh.read())


# ---------------------------------------------------------------------------
# human-readable summary


def matrix_text(m: RationalMatrix) -> str:
    if not m.rows:
        return "  []"
    cells = [[_q(x) for x in m.row(i)] for i in range(m.rows)]
    width = max(len(c) for r in cells for c in r)
    return "\n".join("  [" + " ".join(c.rjust(width) for c in r) + "]" for r in cells)


def rayleigh_text(m: HamiltonianModel) -> str:
    """1/2 xdot^T F xdot written in the velocities of the canonical coordinates."""
    n = m.n_canonical
    dots = [f"d{x}/dt" for x in m.names[:n]]
    expr = EnergyExpr()
    for i in range(n):
        for j in range(n):
            c = m.rayleigh[i, j]
            if c:
                expr = expr + EnergyExpr({(((i, 1),), None): PiRational(c / 2)}) * EnergyExpr({(((j, 1),), None): PiRational(1)})
    return expr.to_text(dots) if expr else "0"


def emit_summary(result: HamiltonianModel | ObstructionReport) -> str:
    if isinstance(result, ObstructionReport):
        lines = [f"obstruction: {result.kind.value} (round {result.stage})", f"  {result.detail}"]
        if result.witness_text:
            lines.append(f"  witness: {result.witness_text}")
        return "\n".join(lines) + "\n"
    m = result
    n = m.n_canonical
    dyn = len(m.pairs)
    lines = [
        f"{dyn} canonical pair{'s' if dyn != 1 else ''}; "
        f"{m.gauge_modes} gauge mode{'s' if m.gauge_modes != 1 else ''} eliminated",
        f"{dyn} dynamical degree{'s' if dyn != 1 else ''} of freedom",
    ]
    for pos, mom in m.pairs:
        lines.append(f"  {{{pos}, {mom}}} = 1")
    lines.append("Poisson matrix:")
    lines.append(matrix_text(m.poisson))
    lines.append(f"H = {m.hamiltonian.to_text(list(m.names))}")
    lines.append(f"Rayleigh = {rayleigh_text(m)}")
    if len(m.sources):
        lines.append(f"sources: {m.sources.to_text(list(m.names))}")
        for name, w in zip(m.sources.names, m.sources.waveforms):
            lines.append(f"  {name}(t) = {w.to_text()}")
    for c in m.implicit:
        eq = c.equation.to_text(list(m.names))
        lines.append(f"implicit {c.name}: {eq} = 0 [{c.verdict}]")
    for j, f in enumerate(m.compact_flags[:n]):
        if f is not Compactness.EXTENDED:
            lines.append(f"  {m.names[j]}: {f.value}")
    for a in m.advisories:
        lines.append(f"advisory: {a.kind.value}: {a.detail}")
    return "\n".join(lines) + "\n"
