"""Netlist text format and the validated circuit graph.

One declaration per line, ``#`` starts a comment::

    node 0 1 2
    branch C1 cap 1 0 C=2
    branch J1 josephson 2 0 EJ=1 phi0=2*pi
    branch V1 vsource 1 2 waveform=sin:1,3,0
    transformer T1 left=a right=b N=[[2]]
    gyrator G1 ports=g1,g2 R=5
    extflux X loop=+J1,-J2 waveform=const:1/3

Numbers are parsed exactly (``3/4``, ``0.25``, ``2*pi``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .energy_symbolics import (
    EnergyExpr,
    ExprSyntaxError,
    PiRational,
    const,
    cos,
    parse_expr,
    parse_scalar,
    var,
)
from .exact_linalg import RationalMatrix


class NetlistError(ValueError):
    """Parse or validation failure tied to a source location."""

    kind = "NetlistError"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(f"{self.kind}: {loc}{message}")
        self.message = message
        self.line = line
        self.column = column


class UnknownElementKind(NetlistError):
    kind = "UnknownElementKind"


class DanglingNode(NetlistError):
    kind = "DanglingNode"


class DuplicateId(NetlistError):
    kind = "DuplicateId"


class MalformedGroup(NetlistError):
    kind = "MalformedGroup"


class BadRational(NetlistError):
    kind = "BadRational"


class NonAntisymmetricGyrator(NetlistError):
    kind = "NonAntisymmetricGyrator"


class SelfLoop(NetlistError):
    kind = "SelfLoop"


class InvalidParameter(NetlistError):
    kind = "InvalidParameter"


class BranchKind(enum.Enum):
    CAPACITOR = "Capacitor"
    INDUCTOR = "Inductor"
    VOLTAGE_SOURCE = "VoltageSource"
    CURRENT_SOURCE = "CurrentSource"
    RESISTOR = "Resistor"
    TRANSFORMER_PORT = "TransformerPort"
    GYRATOR_PORT = "GyratorPort"

    @property
    def is_charge_energy(self) -> bool:
        return self is BranchKind.CAPACITOR

    @property
    def is_source(self) -> bool:
        return self in (BranchKind.VOLTAGE_SOURCE, BranchKind.CURRENT_SOURCE)

    @property
    def short(self) -> str:
        return _SHORT[self]


_SHORT = {
    BranchKind.CAPACITOR: "C",
    BranchKind.INDUCTOR: "L",
    BranchKind.VOLTAGE_SOURCE: "V",
    BranchKind.CURRENT_SOURCE: "I",
    BranchKind.RESISTOR: "R",
    BranchKind.TRANSFORMER_PORT: "T",
    BranchKind.GYRATOR_PORT: "G",
}


# ---------------------------------------------------------------------------
# waveforms


def _num_text(c: PiRational) -> str:
    return c.to_text().replace(" ", "")


class Waveform:
    """Time-dependent source value; all parameters exact."""

    def value(self, t: float) -> float:
        raise NotImplementedError

    def derivative(self) -> "Waveform":
        raise NotImplementedError

    def scale(self, c) -> "Waveform":
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False

    def __call__(self, t: float) -> float:
        return self.value(t)


@dataclass(frozen=True)
class Constant(Waveform):
    level: PiRational

    def value(self, t):
        return float(self.level)

    def derivative(self):
        return Constant(PiRational(0))

    def scale(self, c):
        return Constant(self.level * PiRational.coerce(c))

    def to_text(self):
        return f"const:{_num_text(self.level)}"

    def is_zero(self):
        return not self.level


@dataclass(frozen=True)
class Sinusoid(Waveform):
    """amplitude * sin(omega * t + phase)."""

    amplitude: PiRational
    omega: PiRational
    phase: PiRational

    def value(self, t):
        return float(self.amplitude) * math.sin(float(self.omega) * t + float(self.phase))

    def derivative(self):
        if not self.omega:
            return Constant(PiRational(0))
        return Sinusoid(self.amplitude * self.omega, self.omega, self.phase + PiRational({1: Fraction(1, 2)}))

    def scale(self, c):
        return Sinusoid(self.amplitude * PiRational.coerce(c), self.omega, self.phase)

    def to_text(self):
        return f"sin:{_num_text(self.amplitude)},{_num_text(self.omega)},{_num_text(self.phase)}"

    def is_zero(self):
        return not self.amplitude


def _points_text(points) -> str:
    return ";".join(f"({_num_text(t)},{_num_text(v)})" for t, v in points)


@dataclass(frozen=True)
class PiecewiseLinear(Waveform):
    """Linear interpolation between breakpoints, held constant outside them."""

    points: tuple[tuple[PiRational, PiRational], ...]

    def value(self, t):
        ts = [float(p[0]) for p in self.points]
        vs = [float(p[1]) for p in self.points]
        if t <= ts[0]:
            return vs[0]
        if t >= ts[-1]:
            return vs[-1]
        for i in range(len(ts) - 1):
            if t <= ts[i + 1]:
                a = (t - ts[i]) / (ts[i + 1] - ts[i])
                return vs[i] + a * (vs[i + 1] - vs[i])
        return vs[-1]

    def derivative(self):
        steps = []
        for (t0, v0), (t1, v1) in zip(self.points, self.points[1:]):
            steps.append((t0, (v1 - v0) / (t1 - t0)))
        steps.append((self.points[-1][0], PiRational(0)))
        return Step(tuple(steps))

    def scale(self, c):
        c = PiRational.coerce(c)
        return PiecewiseLinear(tuple((t, v * c) for t, v in self.points))

    def to_text(self):
        return "pwl:" + _points_text(self.points)

    def is_zero(self):
        return all(not v for _, v in self.points)


@dataclass(frozen=True)
class Step(Waveform):
    """Piecewise constant: value v_i on [t_i, t_{i+1}), zero before t_0."""

    points: tuple[tuple[PiRational, PiRational], ...]

    def value(self, t):
        out = 0.0
        for tk, v in self.points:
            if t >= float(tk):
                out = float(v)
            else:
                break
        return out

    def derivative(self):
        # jumps carry no finite derivative; the distributional part is dropped
        return Constant(PiRational(0))

    def scale(self, c):
        c = PiRational.coerce(c)
        return Step(tuple((t, v * c) for t, v in self.points))

    def to_text(self):
        return "step:" + _points_text(self.points)

    def is_zero(self):
        return all(not v for _, v in self.points)


@dataclass(frozen=True)
class WaveformSum(Waveform):
    parts: tuple[Waveform, ...]

    def value(self, t):
        return sum(p.value(t) for p in self.parts)

    def derivative(self):
        return waveform_sum([p.derivative() for p in self.parts])

    def scale(self, c):
        return waveform_sum([p.scale(c) for p in self.parts])

    def to_text(self):
        return "|".join(p.to_text() for p in self.parts)

    def is_zero(self):
        return all(p.is_zero() for p in self.parts)


def waveform_sum(parts: Sequence[Waveform]) -> Waveform:
    flat = []
    for p in parts:
        flat.extend(p.parts if isinstance(p, WaveformSum) else [p])
    consts = [p for p in flat if isinstance(p, Constant)]
    rest = [p for p in flat if not isinstance(p, Constant) and not p.is_zero()]
    level = sum((c.level for c in consts), PiRational(0))
    if level or not rest:
        rest = ([Constant(level)] if level or not rest else []) + rest
    return rest[0] if len(rest) == 1 else WaveformSum(tuple(rest))


def parse_waveform(text: str) -> Waveform:
    """Parse ``const:v``, ``sin:a,w,p``, ``pwl:(t,v);...``, ``step:...`` and ``|`` sums."""
    if "|" in text:
        return waveform_sum([parse_waveform(p) for p in text.split("|")])
    head, sep, body = text.partition(":")
    if not sep:
        raise ValueError(f"waveform needs a form prefix: {text!r}")
    head = head.strip().lower()
    if head == "const":
        return Constant(parse_scalar(body))
    if head == "sin":
        parts = body.split(",")
        if len(parts) != 3:
            raise ValueError("sin waveform takes amplitude,omega,phase")
        a, w, p = (parse_scalar(x) for x in parts)
        return Sinusoid(a, w, p)
    if head in ("pwl", "step"):
        pts = []
        for chunk in body.split(";"):
            chunk = chunk.strip()
            if not (chunk.startswith("(") and chunk.endswith(")")):
                raise ValueError(f"breakpoint must look like (t,v): {chunk!r}")
            t, _, v = chunk[1:-1].partition(",")
            pts.append((parse_scalar(t), parse_scalar(v)))
        if not pts:
            raise ValueError("empty breakpoint list")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if not float(t1) > float(t0):
                raise ValueError("breakpoint times must be strictly increasing")
        return PiecewiseLinear(tuple(pts)) if head == "pwl" else Step(tuple(pts))
    raise ValueError(f"unknown waveform form {head!r}")


# ---------------------------------------------------------------------------
# graph types


@dataclass(frozen=True)
class Branch:
    id: str
    kind: BranchKind
    tail: str
    head: str
    energy: EnergyExpr | None = None
    value: Fraction | None = None
    waveform: Waveform | None = None
    compact_flux: bool = False
    compact_charge: bool = False
    group: str | None = None
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ConstraintGroup:
    id: str
    kind: str  # "transformer" or "gyrator"
    members: tuple[str, ...]
    turns: RationalMatrix | None = None
    n_left: int = 0
    impedance: Fraction | None = None
    coupling: RationalMatrix | None = None
    line: int | None = field(default=None, compare=False)

    def gyrator_admittance(self) -> RationalMatrix:
        """Y_G = coupling / R."""
        return self.coupling.scale(1 / self.impedance)


@dataclass(frozen=True)
class ExternalFluxDecl:
    id: str
    loop: tuple[tuple[int, str], ...]  # (sign, branch id)
    waveform: Waveform
    split: tuple[str, tuple[str, ...]] | None = None  # (node, branches moved off it)
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class CircuitGraph:
    nodes: tuple[str, ...]
    branches: tuple[Branch, ...]
    groups: tuple[ConstraintGroup, ...] = ()
    external_fluxes: tuple[ExternalFluxDecl, ...] = ()

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def branch_index(self, bid: str) -> int:
        for i, b in enumerate(self.branches):
            if b.id == bid:
                return i
        raise KeyError(bid)

    def node_index(self, nid: str) -> int:
        return self.nodes.index(nid)

    def branch(self, bid: str) -> Branch:
        return self.branches[self.branch_index(bid)]

    def indices_of(self, kind: BranchKind) -> list[int]:
        return [i for i, b in enumerate(self.branches) if b.kind is kind]

    def reorder(self, order: Sequence[str]) -> "CircuitGraph":
        """Branches listed in ``order`` first (in that order), the rest after."""
        ids = [b.id for b in self.branches]
        for o in order:
            if o not in ids:
                raise KeyError(f"unknown branch {o!r} in order override")
        rest = [i for i in ids if i not in order]
        by_id = {b.id: b for b in self.branches}
        return replace(self, branches=tuple(by_id[i] for i in list(order) + rest))

    def has_kind(self, kind: BranchKind) -> bool:
        return any(b.kind is kind for b in self.branches)


# ---------------------------------------------------------------------------
# tokenising


def _split_tokens(line: str) -> list[tuple[str, int]]:
    """Whitespace split that keeps bracketed/parenthesised text together."""
    toks = []
    depth = 0
    cur = ""
    start = 0
    for i, ch in enumerate(line):
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch.isspace() and depth == 0:
            if cur:
                toks.append((cur, start))
                cur = ""
            continue
        if not cur:
            start = i
        cur += ch
    if cur:
        toks.append((cur, start))
    return toks


def _exact(text: str, lineno: int, col: int) -> PiRational:
    try:
        return parse_scalar(text)
    except (ExprSyntaxError, ValueError, ZeroDivisionError) as exc:
        raise BadRational(f"cannot read {text!r} as an exact number ({exc})", lineno, col) from None


def _rational(text: str, lineno: int, col: int) -> Fraction:
    v = _exact(text, lineno, col)
    if not v.is_rational():
        raise BadRational(f"{text!r} must be rational here", lineno, col)
    return v.as_fraction()


def _matrix(text: str, lineno: int, col: int) -> RationalMatrix:
    s = text.replace(" ", "")
    if not (s.startswith("[[") and s.endswith("]]")):
        raise MalformedGroup(f"matrix must look like [[a,b],[c,d]], got {text!r}", lineno, col)
    rows = [r.strip("[]") for r in s[1:-1].split("],[")]
    data = [[_rational(x, lineno, col) for x in r.split(",")] for r in rows]
    if len({len(r) for r in data}) != 1:
        raise MalformedGroup("ragged matrix rows", lineno, col)
    return RationalMatrix.from_rows(data)


def _matrix_text(m: RationalMatrix) -> str:
    return "[" + ",".join("[" + ",".join(str(x) for x in r) + "]" for r in m.tolist()) + "]"


_BRANCH_KINDS = {
    "cap": BranchKind.CAPACITOR,
    "ind": BranchKind.INDUCTOR,
    "josephson": BranchKind.INDUCTOR,
    "phaseslip": BranchKind.CAPACITOR,
    "energy": None,
    "vsource": BranchKind.VOLTAGE_SOURCE,
    "isource": BranchKind.CURRENT_SOURCE,
    "res": BranchKind.RESISTOR,
    "tport": BranchKind.TRANSFORMER_PORT,
    "gport": BranchKind.GYRATOR_PORT,
}

_ALLOWED = {
    "cap": {"C", "expr"},
    "ind": {"L", "expr"},
    "josephson": {"EJ", "phi0"},
    "phaseslip": {"EP", "qe"},
    "energy": {"var", "expr"},
    "vsource": {"waveform"},
    "isource": {"waveform"},
    "res": {"R"},
    "tport": set(),
    "gport": set(),
}

X = var(0)


def _branch_energy(element, params, lineno, cols):
    def need(key):
        if key not in params:
            raise InvalidParameter(f"{element} branch needs {key}=", lineno)
        return params[key]

    def expr():
        try:
            return parse_expr(params["expr"], {"x": 0})
        except ExprSyntaxError as exc:
            raise BadRational(f"energy expression: {exc}", lineno, cols["expr"]) from None

    if element in ("cap", "ind"):
        key = "C" if element == "cap" else "L"
        if "expr" in params:
            if key in params:
                raise InvalidParameter(f"give either {key}= or expr=, not both", lineno)
            return expr()
        c = _exact(need(key), lineno, cols.get(key))
        if not c or c.sign() <= 0:
            raise InvalidParameter(f"{key} must be positive", lineno, cols.get(key))
        return (X * X).scale(PiRational(Fraction(1, 2)) / c)
    if element == "josephson":
        ej = _exact(need("EJ"), lineno, cols.get("EJ"))
        phi0 = _exact(params.get("phi0", "2*pi"), lineno, cols.get("phi0"))
        if not phi0:
            raise InvalidParameter("phi0 must be nonzero", lineno, cols.get("phi0"))
        return -cos(X.scale(PiRational.pi(1) * 2 / phi0)).scale(ej)
    if element == "phaseslip":
        ep = _exact(need("EP"), lineno, cols.get("EP"))
        qe = _exact(params.get("qe", "1/2"), lineno, cols.get("qe"))
        if not qe:
            raise InvalidParameter("qe must be nonzero", lineno, cols.get("qe"))
        return -cos(X.scale(PiRational.pi(1) / qe)).scale(ep)
    if element == "energy":
        need("expr")
        return expr()
    return None


def parse_netlist(text: str) -> CircuitGraph:
    """Parse netlist text into a validated :class:`CircuitGraph`.

    The first violated invariant is raised as a :class:`NetlistError`
    subclass carrying the line (and column when known).
    """
    nodes: list[str] = []
    node_line: dict[str, int] = {}
    branches: list[Branch] = []
    groups: list[ConstraintGroup] = []
    fluxes: list[ExternalFluxDecl] = []
    used_ids: dict[str, int] = {}

    def claim(ident, lineno, col):
        if ident in used_ids:
            raise DuplicateId(f"{ident!r} already declared on line {used_ids[ident]}", lineno, col)
        used_ids[ident] = lineno

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _split_tokens(line)
        if not toks:
            continue
        head, hcol = toks[0]
        col1 = lambda c: c + 1  # noqa: E731 - columns are 1-based in messages
        if head == "node":
            for nid, c in toks[1:]:
                if nid in node_line:
                    raise DuplicateId(f"node {nid!r} already declared", lineno, col1(c))
                node_line[nid] = lineno
                nodes.append(nid)
            continue
        if head in ("branch", "transformer", "gyrator", "extflux"):
            if len(toks) < 2:
                raise MalformedGroup(f"{head} needs an id", lineno, col1(hcol))
            ident, icol = toks[1]
            claim(ident, lineno, col1(icol))
        else:
            raise UnknownElementKind(f"unknown declaration {head!r}", lineno, col1(hcol))

        params: dict[str, str] = {}
        cols: dict[str, int] = {}
        positional = []
        start = 2
        for tok, c in toks[start:]:
            if "=" in tok:
                k, _, v = tok.partition("=")
                if k in params:
                    raise DuplicateId(f"parameter {k!r} repeated", lineno, col1(c))
                params[k] = v
                cols[k] = col1(c) + len(k) + 1
            else:
                if params:
                    raise InvalidParameter(f"positional field {tok!r} after key=value pairs", lineno, col1(c))
                positional.append((tok, c))

        if head == "branch":
            if len(positional) != 3:
                raise InvalidParameter("branch needs <id> <kind> <tail> <head>", lineno)
            (element, ecol), (tail, tcol), (hd, hdcol) = positional
            if element not in _BRANCH_KINDS:
                raise UnknownElementKind(f"unknown branch kind {element!r}", lineno, col1(ecol))
            for n, c in ((tail, tcol), (hd, hdcol)):
                if n not in node_line:
                    raise DanglingNode(f"node {n!r} is not declared", lineno, col1(c))
            if tail == hd:
                raise SelfLoop(f"branch {ident!r} starts and ends on node {tail!r}", lineno, col1(tcol))
            compact = params.pop("compact", None)
            for k in params:
                if k not in _ALLOWED[element]:
                    raise InvalidParameter(f"{element} does not take {k}=", lineno, cols[k])
            kind = _BRANCH_KINDS[element]
            if element == "energy":
                v = params.get("var")
                if v not in ("q", "phi"):
                    raise InvalidParameter("energy branch needs var=q or var=phi", lineno, cols.get("var"))
                kind = BranchKind.CAPACITOR if v == "q" else BranchKind.INDUCTOR
            energy = _branch_energy(element, params, lineno, cols)
            if energy is not None and energy.variables() - {0}:
                raise InvalidParameter("energy may depend only on x", lineno, cols.get("expr"))
            value = None
            waveform = None
            if element == "res":
                if "R" not in params:
                    raise InvalidParameter("res branch needs R=", lineno)
                value = _rational(params["R"], lineno, cols["R"])
                if value <= 0:
                    raise InvalidParameter("resistance must be positive", lineno, cols["R"])
            if kind.is_source:
                if "waveform" not in params:
                    raise InvalidParameter(f"{element} needs waveform=", lineno)
                try:
                    waveform = parse_waveform(params["waveform"])
                except (ValueError, ExprSyntaxError, ZeroDivisionError) as exc:
                    raise BadRational(f"waveform: {exc}", lineno, cols["waveform"]) from None
            cflux = element == "josephson"
            ccharge = element == "phaseslip"
            if compact is not None:
                if compact not in ("flux", "charge", "none"):
                    raise InvalidParameter("compact must be flux, charge or none", lineno)
                cflux, ccharge = compact == "flux", compact == "charge"
            branches.append(Branch(ident, kind, tail, hd, energy, value, waveform, cflux, ccharge, None, lineno))
            continue

        if positional:
            tok, c = positional[0]
            raise InvalidParameter(f"unexpected field {tok!r}", lineno, col1(c))

        if head == "transformer":
            for k in ("left", "right", "N"):
                if k not in params:
                    raise MalformedGroup(f"transformer needs {k}=", lineno)
            extra = set(params) - {"left", "right", "N"}
            if extra:
                raise MalformedGroup(f"transformer does not take {sorted(extra)}", lineno)
            left = tuple(x for x in params["left"].split(",") if x)
            right = tuple(x for x in params["right"].split(",") if x)
            n = _matrix(params["N"], lineno, cols["N"])
            groups.append(ConstraintGroup(ident, "transformer", left + right, turns=n, n_left=len(left), line=lineno))
        elif head == "gyrator":
            for k in ("ports", "R"):
                if k not in params:
                    raise MalformedGroup(f"gyrator needs {k}=", lineno)
            extra = set(params) - {"ports", "R", "Y"}
            if extra:
                raise MalformedGroup(f"gyrator does not take {sorted(extra)}", lineno)
            ports = tuple(x for x in params["ports"].split(",") if x)
            r = _rational(params["R"], lineno, cols["R"])
            if r == 0:
                raise MalformedGroup("gyrator R must be nonzero", lineno, cols["R"])
            if "Y" in params:
                y = _matrix(params["Y"], lineno, cols["Y"])
            elif len(ports) == 2:
                y = RationalMatrix.from_rows([[0, 1], [-1, 0]])
            else:
                raise MalformedGroup("gyrators with other than 2 ports need Y=", lineno)
            groups.append(ConstraintGroup(ident, "gyrator", ports, impedance=r, coupling=y, line=lineno))
        else:  # extflux
            for k in ("loop", "waveform"):
                if k not in params:
                    raise MalformedGroup(f"extflux needs {k}=", lineno)
            loop = []
            for item in params["loop"].split(","):
                item = item.strip()
                sign = -1 if item.startswith("-") else 1
                loop.append((sign, item.lstrip("+-")))
            try:
                wf = parse_waveform(params["waveform"])
            except (ValueError, ExprSyntaxError, ZeroDivisionError) as exc:
                raise BadRational(f"waveform: {exc}", lineno, cols["waveform"]) from None
            split = None
            if "split" in params:
                parts = params["split"].split(":")
                if len(parts) != 3 or parts[0] != "node":
                    raise MalformedGroup("split must be node:<node>:<branch,...>", lineno, cols["split"])
                split = (parts[1], tuple(x for x in parts[2].split(",") if x))
            extra = set(params) - {"loop", "waveform", "split"}
            if extra:
                raise MalformedGroup(f"extflux does not take {sorted(extra)}", lineno)
            fluxes.append(ExternalFluxDecl(ident, tuple(loop), wf, split, lineno))

    # attach group ids to their port branches
    by_id = {b.id: i for i, b in enumerate(branches)}
    for g in groups:
        for m in g.members:
            if m not in by_id:
                raise MalformedGroup(f"group {g.id!r} names unknown branch {m!r}", g.line)
            i = by_id[m]
            if branches[i].group is not None:
                raise MalformedGroup(f"branch {m!r} belongs to two groups", g.line)
            branches[i] = replace(branches[i], group=g.id)

    graph = CircuitGraph(tuple(nodes), tuple(branches), tuple(groups), tuple(fluxes))
    diags = validate(graph)
    if diags:
        raise diags[0]
    return graph


def validate(graph: CircuitGraph) -> list[NetlistError]:
    """All invariant violations, one diagnostic each; empty for a valid graph."""
    out: list[NetlistError] = []
    nodes = set(graph.nodes)
    seen: set[str] = set()
    for n in graph.nodes:
        if n in seen:
            out.append(DuplicateId(f"node {n!r} declared twice"))
        seen.add(n)
    ids: set[str] = set()
    groups = {g.id: g for g in graph.groups}
    for b in graph.branches:
        if b.id in ids:
            out.append(DuplicateId(f"branch id {b.id!r} repeated", b.line))
        ids.add(b.id)
        for n in (b.tail, b.head):
            if n not in nodes:
                out.append(DanglingNode(f"branch {b.id!r} uses undeclared node {n!r}", b.line))
        if b.tail == b.head:
            out.append(SelfLoop(f"branch {b.id!r} is a self-loop", b.line))
        if b.compact_flux and b.compact_charge:
            out.append(InvalidParameter(f"branch {b.id!r} cannot be compact in both charge and flux", b.line))
        if b.kind is BranchKind.RESISTOR and not (b.value is not None and b.value > 0):
            out.append(InvalidParameter(f"resistor {b.id!r} needs a positive value", b.line))
        if b.kind in (BranchKind.TRANSFORMER_PORT, BranchKind.GYRATOR_PORT):
            if b.energy is not None:
                out.append(InvalidParameter(f"port branch {b.id!r} carries an energy", b.line))
            g = groups.get(b.group) if b.group else None
            want = "transformer" if b.kind is BranchKind.TRANSFORMER_PORT else "gyrator"
            if g is None:
                out.append(MalformedGroup(f"port branch {b.id!r} belongs to no {want}", b.line))
            elif g.kind != want:
                out.append(MalformedGroup(f"port branch {b.id!r} is in a {g.kind}, expected a {want}", b.line))
        elif b.group is not None:
            out.append(MalformedGroup(f"branch {b.id!r} is not a port but sits in group {b.group!r}", b.line))
        if b.kind in (BranchKind.CAPACITOR, BranchKind.INDUCTOR):
            if b.energy is None:
                out.append(InvalidParameter(f"branch {b.id!r} needs an energy function", b.line))
            elif b.energy.variables() - {0}:
                out.append(InvalidParameter(f"energy of {b.id!r} depends on other variables", b.line))
        if b.kind.is_source and b.waveform is None:
            out.append(InvalidParameter(f"source {b.id!r} has no waveform", b.line))
    member_of: dict[str, str] = {}
    for g in graph.groups:
        for m in g.members:
            if m not in ids:
                out.append(MalformedGroup(f"group {g.id!r} names unknown branch {m!r}", g.line))
                continue
            if m in member_of:
                out.append(MalformedGroup(f"branch {m!r} is in groups {member_of[m]!r} and {g.id!r}", g.line))
            member_of[m] = g.id
            if graph.branch(m).group != g.id:
                out.append(MalformedGroup(f"branch {m!r} does not point back at group {g.id!r}", g.line))
        if len(set(g.members)) != len(g.members):
            out.append(MalformedGroup(f"group {g.id!r} repeats a member", g.line))
        if g.kind == "transformer":
            n_right = len(g.members) - g.n_left
            n = g.turns
            if g.n_left == 0 or n_right == 0:
                out.append(MalformedGroup(f"transformer {g.id!r} needs left and right ports", g.line))
            elif n is None or n.shape != (n_right, g.n_left):
                shape = None if n is None else n.shape
                out.append(MalformedGroup(
                    f"transformer {g.id!r}: N has shape {shape}, expected ({n_right}, {g.n_left})", g.line))
        elif g.kind == "gyrator":
            y = g.coupling
            k = len(g.members)
            if y is None or y.shape != (k, k):
                out.append(MalformedGroup(f"gyrator {g.id!r}: coupling must be {k}x{k}", g.line))
            elif not y.is_antisymmetric():
                out.append(NonAntisymmetricGyrator(f"gyrator {g.id!r} coupling is not antisymmetric", g.line))
            if not g.impedance:
                out.append(MalformedGroup(f"gyrator {g.id!r} needs nonzero R", g.line))
        else:
            out.append(MalformedGroup(f"group {g.id!r} has unknown kind {g.kind!r}", g.line))
    for x in graph.external_fluxes:
        bad = [bid for _, bid in x.loop if bid not in ids]
        if bad:
            out.append(MalformedGroup(f"extflux {x.id!r} names unknown branches {bad}", x.line))
            continue
        balance: dict[str, int] = {}
        for s, bid in x.loop:
            b = graph.branch(bid)
            balance[b.tail] = balance.get(b.tail, 0) + s
            balance[b.head] = balance.get(b.head, 0) - s
        if any(balance.values()):
            out.append(MalformedGroup(f"extflux {x.id!r} loop is not closed", x.line))
        if x.split is not None:
            node, moved = x.split
            if node not in nodes:
                out.append(DanglingNode(f"extflux {x.id!r} splits undeclared node {node!r}", x.line))
            for bid in moved:
                if bid not in ids:
                    out.append(MalformedGroup(f"extflux {x.id!r} split names unknown branch {bid!r}", x.line))
                elif node not in (graph.branch(bid).tail, graph.branch(bid).head):
                    out.append(MalformedGroup(f"branch {bid!r} does not touch node {node!r}", x.line))
    return out


def serialize(graph: CircuitGraph) -> str:
    """Netlist text that parses back to an equal graph."""
    lines = []
    if graph.nodes:
        lines.append("node " + " ".join(graph.nodes))
    for b in graph.branches:
        parts = ["branch", b.id]
        if b.kind in (BranchKind.CAPACITOR, BranchKind.INDUCTOR):
            v = "q" if b.kind is BranchKind.CAPACITOR else "phi"
            parts += ["energy", b.tail, b.head, f"var={v}", "expr=" + b.energy.to_text(["x"]).replace(" ", "")]
        elif b.kind is BranchKind.RESISTOR:
            parts += ["res", b.tail, b.head, f"R={b.value}"]
        elif b.kind.is_source:
            el = "vsource" if b.kind is BranchKind.VOLTAGE_SOURCE else "isource"
            parts += [el, b.tail, b.head, "waveform=" + b.waveform.to_text()]
        else:
            el = "tport" if b.kind is BranchKind.TRANSFORMER_PORT else "gport"
            parts += [el, b.tail, b.head]
        compact = "flux" if b.compact_flux else "charge" if b.compact_charge else "none"
        parts.append(f"compact={compact}")
        lines.append(" ".join(parts))
    for g in graph.groups:
        if g.kind == "transformer":
            left = ",".join(g.members[: g.n_left])
            right = ",".join(g.members[g.n_left:])
            lines.append(f"transformer {g.id} left={left} right={right} N={_matrix_text(g.turns)}")
        else:
            lines.append(f"gyrator {g.id} ports={','.join(g.members)} R={g.impedance} Y={_matrix_text(g.coupling)}")
    for x in graph.external_fluxes:
        loop = ",".join(("+" if s > 0 else "-") + bid for s, bid in x.loop)
        line = f"extflux {x.id} loop={loop} waveform={x.waveform.to_text()}"
        if x.split is not None:
            line += f" split=node:{x.split[0]}:{','.join(x.split[1])}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def load_netlist(path) -> CircuitGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read())
