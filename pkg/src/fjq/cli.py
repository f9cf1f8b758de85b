"""``fjq`` command line: analyze, reduce, simulate, check, topology.

Exit codes: 0 success, 1 diagnostics or a failed check, 2 internal error,
3 reduction obstruction (the obstruction document is still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .constraint_assembly import (
    assemble_pfaff,
    kernel_embedding,
    tellegen_check,
    with_embedding,
)
from .dynamics import (
    BifurcationProximity,
    NewtonDivergence,
    NonlinearConstraintUnsupported,
    SimConfig,
    characteristic_period,
    compare_with_oracle,
    integrate,
    write_csv,
)
from .energy_symbolics import total_energy
from .exact_linalg import RationalMatrix, rank, to_fraction
from .fj_reduction import HamiltonianModel, ObstructionReport, flux_to_sources, run_reduction
from .graph_topology import fundamental_matrices
from .model_io import EXTENSION, emit_document, emit_summary, matrix_text
from .netlist import CircuitGraph, NetlistError, load_netlist
from .symplectic_structure import (
    TellegenIdentityViolated,
    congruence,
    precanonical_two_form,
    rayleigh_matrix,
    simplified_two_form,
)

EXIT_OK, EXIT_DIAG, EXIT_INTERNAL, EXIT_OBSTRUCTION = 0, 1, 2, 3
FD_POINTS = 20
FD_TOL = 1e-6
ORACLE_TOL = 1e-5


class Diagnostic(Exception):
    """User-facing problem with the inputs; exit code 1."""


def _color_enabled() -> bool:
    flag = os.environ.get("FJQ_COLOR")
    if flag is not None:
        return flag == "1"
    return sys.stdout.isatty()


def _verdict(ok: bool | None) -> str:
    word = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
    if not _color_enabled():
        return word
    code = {True: "32", False: "31", None: "33"}[ok]
    return f"\x1b[{code}m{word}\x1b[0m"


# ---------------------------------------------------------------------------
# inputs


def _load(args) -> CircuitGraph:
    graph = load_netlist(args.netlist)
    if args.order:
        try:
            graph = graph.reorder([s.strip() for s in args.order.split(",") if s.strip()])
        except KeyError as exc:
            raise Diagnostic(str(exc.args[0])) from None
    return graph


def read_offsets(path, graph: CircuitGraph) -> tuple[Fraction, ...]:
    """JSON object ``{"branch": {"q": "1/2", "phi": "0"}}``; missing entries are zero."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise Diagnostic(f"cannot read offsets {path}: {exc}") from None
    nb = graph.n_branches
    out = [Fraction(0)] * (2 * nb)
    for bid, vals in data.items():
        try:
            b = graph.branch_index(bid)
        except KeyError:
            raise Diagnostic(f"offsets: unknown branch {bid!r}") from None
        for key, val in vals.items():
            if key not in ("q", "phi"):
                raise Diagnostic(f"offsets: key must be q or phi, got {key!r}")
            out[b if key == "q" else nb + b] = to_fraction(val)
    return tuple(out)


def read_embedding(path) -> RationalMatrix:
    """Whitespace-separated rational rows, one matrix row per line."""
    try:
        lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
        return RationalMatrix.from_rows([[Fraction(x) for x in ln] for ln in lines])
    except (OSError, ValueError, ZeroDivisionError) as exc:
        raise Diagnostic(f"cannot read embedding {path}: {exc}") from None


def _offsets(args, graph):
    return read_offsets(args.offsets, graph) if args.offsets else None


def _parse_init(text: str | None) -> dict[str, float]:
    out = {}
    for part in (text or "").split(","):
        if not part.strip():
            continue
        name, _, val = part.partition("=")
        try:
            out[name.strip()] = float(Fraction(val.strip()))
        except (ValueError, ZeroDivisionError):
            raise Diagnostic(f"bad initial value {part!r}") from None
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_topology(args) -> int:
    graph = _load(args)
    topo = fundamental_matrices(graph)
    ids = [b.id for b in graph.branches]
    print(f"branches: {' '.join(ids)}")
    print(f"tree: {' '.join(ids[i] for i in topo.tree_branches)}")
    print(f"chords: {' '.join(ids[i] for i in topo.chords) or '-'}")
    print(f"components: {topo.components}")
    print("F_C:")
    print(matrix_text(topo.cutset))
    print("F_L:")
    print(matrix_text(topo.loop))
    return EXIT_OK


def cmd_analyze(args) -> int:
    graph = _load(args)
    if graph.external_fluxes:
        graph = flux_to_sources(graph)
    topo = fundamental_matrices(graph)
    pfaff = assemble_pfaff(graph, topo)
    space = kernel_embedding(pfaff, graph, topo)
    print(f"{graph.n_branches} branches, {len(graph.nodes)} nodes, {len(topo.chords)} loops")
    print("Pfaff blocks: " + ", ".join(f"{name} {b - a}" for name, a, b in pfaff.blocks if b > a))
    print(f"rank F = {rank(pfaff.f)}, dim ker F = {space.dim}")
    print("K (columns: " + " ".join(space.coord_names) + "):")
    print(matrix_text(space.k))
    e = congruence(space.k, precanonical_two_form(graph))
    print(f"two-form (rank {rank(e)}):")
    print(matrix_text(e))
    f = rayleigh_matrix(space, graph)
    if not f.is_zero():
        print("Rayleigh:")
        print(matrix_text(f))
    rep = tellegen_check(space, graph)
    for name in rep.checked:
        bad = [v for v in rep.violations if v.startswith(name)]
        print(f"Tellegen {name}: {'ok' if not bad else bad[0]}")
    if args.verbose and graph.groups:
        for g in graph.groups:
            print(f"group {g.id}: {g.kind}")
    return EXIT_OK if rep.ok else EXIT_DIAG


def _reduce(args, graph):
    return run_reduction(graph, offsets=_offsets(args, graph))


def cmd_reduce(args) -> int:
    graph = _load(args)
    result = _reduce(args, graph)
    out = Path(args.out) if args.out else Path(args.netlist).with_suffix("").with_suffix(EXTENSION)
    out.write_text(emit_document(result))
    sys.stdout.write(emit_summary(result))
    if args.verbose:
        print(f"wrote {out}")
    return EXIT_OBSTRUCTION if isinstance(result, ObstructionReport) else EXIT_OK


def cmd_simulate(args) -> int:
    graph = _load(args)
    result = _reduce(args, graph)
    if isinstance(result, ObstructionReport):
        sys.stdout.write(emit_summary(result))
        return EXIT_OBSTRUCTION
    model: HamiltonianModel = result
    period = characteristic_period(model)
    t_end = args.t_end if args.t_end is not None else 10 * period
    dt = args.dt if args.dt is not None else period / 1000
    try:
        cfg = SimConfig(t_end, dt, args.method, _parse_init(args.init))
        traj = integrate(model, cfg)
    except KeyError as exc:
        raise Diagnostic(str(exc.args[0])) from None
    except ValueError as exc:
        raise Diagnostic(str(exc)) from None
    except BifurcationProximity as exc:
        print(f"FAIL bifurcation: {exc} at t={exc.t:.6g}")
        return EXIT_DIAG
    except NewtonDivergence as exc:
        print(f"FAIL newton: {exc}")
        return EXIT_DIAG
    out = Path(args.out) if args.out else Path(args.netlist).with_suffix(".csv")
    write_csv(traj, out)
    print(f"{cfg.steps} steps of {cfg.method}, dt={dt:.6g}, t_end={t_end:.6g}")
    scale = max(abs(traj.energy[0]), 1e-300)
    ok = True
    if not len(model.sources):
        bal = traj.balance()
        drift = float(np.max(np.abs(bal - bal[0]))) / scale
        label = "energy balance" if not model.rayleigh.is_zero() else "energy drift"
        print(f"{label}: {drift:.3e} relative")
    if model.implicit:
        res = float(np.max(traj.residual))
        print(f"constraint residual: {res:.3e}")
    print(f"wrote {out}")
    return EXIT_OK if ok else EXIT_DIAG


def _line(ok, name, detail) -> bool | None:
    print(f"{_verdict(ok)} {name}: {detail}")
    return ok


def cmd_check(args) -> int:
    graph = _load(args)
    if graph.external_fluxes:
        graph = flux_to_sources(graph)
    offsets = _offsets(args, graph)
    space = kernel_embedding(assemble_pfaff(graph), graph)
    if args.embedding:
        k = read_embedding(args.embedding)
        if k.rows != 2 * graph.n_branches:
            raise Diagnostic(f"embedding must have {2 * graph.n_branches} rows, got {k.rows}")
        space = with_embedding(space, k, graph)
    outcomes = []

    rep = tellegen_check(space, graph)
    outcomes.append(_line(rep.ok, "Tellegen", "; ".join(rep.violations) or ", ".join(rep.checked)))

    raw = congruence(space.k, precanonical_two_form(graph))
    alt = congruence(space.k, simplified_two_form(graph))
    same = raw == alt and raw.is_antisymmetric()
    outcomes.append(_line(same, "pullback identity",
                          f"rank {rank(raw)} on {space.dim} coordinates" if same else "raw and simplified forms differ"))

    rng = np.random.default_rng(args.seed)
    energy = total_energy(graph, space, offsets)
    h = energy.h
    m = space.dim
    fn = h.compile()
    grad = [h.diff(j).compile() for j in range(m)]
    worst = 0.0
    for _ in range(FD_POINTS):
        x = rng.uniform(-1.0, 1.0, m)
        g = np.array([f(x) for f in grad])
        fd = np.zeros(m)
        for j in range(m):
            step = 1e-5 * (1.0 + abs(x[j]))
            e = np.zeros(m)
            e[j] = step
            fd[j] = (fn(x + e) - fn(x - e)) / (2 * step)
        denom = float(np.max(np.abs(g)))
        if denom:
            worst = max(worst, float(np.max(np.abs(g - fd))) / denom)
    outcomes.append(_line(worst < FD_TOL, "gradient FD", f"max relative error {worst:.2e} at {FD_POINTS} points"))

    result = run_reduction(graph, offsets=offsets)
    if isinstance(result, ObstructionReport):
        outcomes.append(_line(None, "oracle comparison", f"{result.kind.value} obstruction"))
    elif not args.embedding and offsets is None:
        period = characteristic_period(result)
        cfg = SimConfig(2 * period, period / 400)
        x0 = rng.uniform(-0.5, 0.5, result.n_canonical)
        try:
            cmp_ = compare_with_oracle(graph, result, cfg, x0)
            outcomes.append(_line(cmp_.deviation < ORACLE_TOL, "oracle comparison",
                                  f"sup-norm deviation {cmp_.deviation:.2e} over 2 periods"))
        except NonlinearConstraintUnsupported as exc:
            outcomes.append(_line(None, "oracle comparison", str(exc)))
    else:
        outcomes.append(_line(None, "oracle comparison", "not run with embedding or offset overrides"))
    return EXIT_DIAG if any(o is False for o in outcomes) else EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fjq", description="Hamiltonians of lumped circuits by constrained reduction.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("netlist")
        sp.add_argument("--order", help="comma-separated branch ids to put first")
        sp.add_argument("--offsets", help="JSON file with per-branch q/phi offsets")
        sp.add_argument("--verbose", "-v", action="store_true")
        return sp

    common(sub.add_parser("topology", help="fundamental cutset and loop matrices"))
    common(sub.add_parser("analyze", help="constraints, embedding, two-form and Tellegen report"))
    sp = common(sub.add_parser("reduce", help="write the reduced model document"))
    sp.add_argument("--out")
    sp = common(sub.add_parser("simulate", help="integrate the reduced model and write a CSV"))
    sp.add_argument("--out")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--method", default="RK4", choices=["RK4", "ImplicitMidpoint"])
    sp.add_argument("--init", help="initial values, e.g. Q_1=0.1,Phi_1=0")
    sp = common(sub.add_parser("check", help="run the invariant suite on one circuit"))
    sp.add_argument("--embedding", help="file with a replacement embedding matrix K")
    sp.add_argument("--seed", type=int, default=0)
    return p


COMMANDS = {
    "topology": cmd_topology,
    "analyze": cmd_analyze,
    "reduce": cmd_reduce,
    "simulate": cmd_simulate,
    "check": cmd_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NetlistError as exc:
        print(f"{args.netlist}: {exc}", file=sys.stderr)
        return EXIT_DIAG
    except OSError as exc:
        print(f"fjq: {exc}", file=sys.stderr)
        return EXIT_DIAG
    except (Diagnostic, TellegenIdentityViolated) as exc:
        print(f"fjq: {exc}", file=sys.stderr)
        return EXIT_DIAG
    except Exception as exc:  # noqa: BLE001 - anything else is a bug in fjq
        print(f"fjq: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
