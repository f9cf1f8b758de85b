"""Symbolic energy functions.

An :class:`EnergyExpr` is kept in a canonical expanded form: a sum of terms
``coeff * monomial * trig`` where ``trig`` is 1, ``cos(u)`` or ``sin(u)`` and
``u`` is affine in the variables. Products of trigonometric factors are
rewritten with product-to-sum identities, so the set of such sums is closed
under addition, multiplication, differentiation and affine substitution, and
two expressions are equal exactly when their canonical forms are equal.

Coefficients live in Q[pi, 1/pi] (:class:`PiRational`) so that Josephson
arguments such as ``2*pi*phi/phi0`` stay exact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .exact_linalg import (
    RationalMatrix,
    SingularMatrix,
    inverse,
    is_positive_definite,
    to_fraction,
)

__all__ = [
    "PiRational",
    "Affine",
    "EnergyExpr",
    "ExprSyntaxError",
    "const",
    "var",
    "cos",
    "sin",
    "parse_expr",
    "parse_scalar",
    "SourceCoupling",
    "TotalEnergy",
    "total_energy",
    "gradient",
    "hessian_entry",
    "Verdict",
    "Solution",
    "Implicit",
    "LinearDependentOnVar",
    "solve_extremum",
    "hessian_lower_bound_certified",
]

# rational enclosure of pi, good to 1e-14
PI_LO = Fraction(314159265358979, 10**14)
PI_HI = Fraction(314159265358980, 10**14)


class PiRational:
    """Element of Q[pi, 1/pi]: a finite sum of c_k * pi**k."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[int, Fraction] | Fraction | int | str = 0):
        if isinstance(terms, Mapping):
            items = [(k, to_fraction(c)) for k, c in terms.items()]
        else:
            items = [(0, to_fraction(terms))]
        self.terms = tuple(sorted((k, c) for k, c in items if c))

    @staticmethod
    def pi(power: int = 1) -> "PiRational":
        return PiRational({power: Fraction(1)})

    @classmethod
    def coerce(cls, x) -> "PiRational":
        return x if isinstance(x, PiRational) else cls(x)

    def as_dict(self) -> dict[int, Fraction]:
        return dict(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_rational(self) -> bool:
        return all(k == 0 for k, _ in self.terms)

    def as_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is not rational")
        return self.terms[0][1] if self.terms else Fraction(0)

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def __add__(self, other) -> "PiRational":
        o = PiRational.coerce(other)
        d = dict(self.terms)
        for k, c in o.terms:
            d[k] = d.get(k, 0) + c
        return PiRational(d)

    __radd__ = __add__

    def __neg__(self) -> "PiRational":
        return PiRational({k: -c for k, c in self.terms})

    def __sub__(self, other) -> "PiRational":
        return self + (-PiRational.coerce(other))

    def __rsub__(self, other) -> "PiRational":
        return PiRational.coerce(other) - self

    def __mul__(self, other) -> "PiRational":
        o = PiRational.coerce(other)
        d: dict[int, Fraction] = {}
        for k1, c1 in self.terms:
            for k2, c2 in o.terms:
                d[k1 + k2] = d.get(k1 + k2, 0) + c1 * c2
        return PiRational(d)

    __rmul__ = __mul__

    def inverse(self) -> "PiRational":
        if not self.is_monomial():
            raise ZeroDivisionError(f"cannot invert {self} exactly")
        (k, c), = self.terms
        return PiRational({-k: 1 / c})

    def __truediv__(self, other) -> "PiRational":
        return self * PiRational.coerce(other).inverse()

    def __rtruediv__(self, other) -> "PiRational":
        return PiRational.coerce(other) * self.inverse()

    def __pow__(self, n: int) -> "PiRational":
        out = PiRational(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = PiRational(other)
        if not isinstance(other, PiRational):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __float__(self) -> float:
        return float(sum(float(c) * math.pi**k for k, c in self.terms))

    def interval(self) -> tuple[Fraction, Fraction]:
        """Rational enclosure [lo, hi] of the real value."""
        lo = hi = Fraction(0)
        for k, c in self.terms:
            a, b = PI_LO**k, PI_HI**k
            if k < 0:
                a, b = b, a
            a, b = c * a, c * b
            lo += min(a, b)
            hi += max(a, b)
        return lo, hi

    def abs_upper(self) -> Fraction:
        lo, hi = self.interval()
        return max(abs(lo), abs(hi))

    def sign(self) -> int:
        if not self.terms:
            return 0
        lo, hi = self.interval()
        if lo > 0:
            return 1
        if hi < 0:
            return -1
        v = float(self)
        return 1 if v > 0 else -1

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = [_mono_pi_text(k, c) for k, c in self.terms]
        if len(parts) == 1:
            return parts[0]
        return "(" + " + ".join(parts).replace("+ -", "- ") + ")"

    __str__ = to_text

    def __repr__(self) -> str:
        return f"PiRational({self.to_text()})"


def _mono_pi_text(k: int, c: Fraction) -> str:
    if k == 0:
        return str(c)
    p = "pi" if k in (1, -1) else f"pi^{abs(k)}"
    if k < 0:
        return f"{c}/{p}"
    if c == 1:
        return p
    if c == -1:
        return f"-{p}"
    return f"{c}*{p}"


ZERO = PiRational(0)
ONE = PiRational(1)


class Affine:
    """Affine form sum_v a_v x_v + b with PiRational coefficients."""

    __slots__ = ("linear", "offset", "_hash")

    def __init__(self, linear: Mapping[int, PiRational] | Iterable = (), offset=ZERO):
        items = linear.items() if isinstance(linear, Mapping) else linear
        lin = {}
        for v, a in items:
            a = PiRational.coerce(a)
            if a:
                lin[v] = lin.get(v, ZERO) + a
        self.linear = tuple(sorted((v, a) for v, a in lin.items() if a))
        self.offset = PiRational.coerce(offset)
        self._hash = hash((self.linear, self.offset))

    def __eq__(self, other):
        return isinstance(other, Affine) and self.linear == other.linear and self.offset == other.offset

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return _affine_sort_key(self) < _affine_sort_key(other)

    def coeff(self, v: int) -> PiRational:
        for w, a in self.linear:
            if w == v:
                return a
        return ZERO

    def is_constant(self) -> bool:
        return not self.linear

    def __neg__(self) -> "Affine":
        return Affine([(v, -a) for v, a in self.linear], -self.offset)

    def __add__(self, other: "Affine") -> "Affine":
        return Affine(list(self.linear) + list(other.linear), self.offset + other.offset)

    def __sub__(self, other: "Affine") -> "Affine":
        return self + (-other)

    def leading_sign(self) -> int:
        for _, a in self.linear:
            return a.sign()
        return self.offset.sign()

    def variables(self) -> set[int]:
        return {v for v, _ in self.linear}

    def evaluate(self, x: Sequence[float]) -> float:
        return sum(float(a) * x[v] for v, a in self.linear) + float(self.offset)

    def to_text(self, names: Sequence[str]) -> str:
        parts = []
        for v, a in self.linear:
            parts.append(_coef_times(a, names[v]))
        if self.offset or not parts:
            parts.append(self.offset.to_text())
        return _join_signed(parts)


def _affine_sort_key(a: Affine):
    return (tuple((v, a2.terms) for v, a2 in a.linear), a.offset.terms)


def _coef_times(c: PiRational, body: str) -> str:
    if c == ONE:
        return body
    if c == -ONE:
        return "-" + body
    return f"{c.to_text()}*{body}"


def _join_signed(parts: list[str]) -> str:
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


# term key: (monomial, trig) with monomial a sorted tuple of (var, exponent)
# and trig either None or (kind, Affine), kind in {"cos", "sin"}


def _normalise_trig(kind: str, arg: Affine, coeff: PiRational):
    """Return (trig_key, coeff) with cos/sin parity applied, or None for zero."""
    if arg.is_constant() and not arg.offset:
        if kind == "cos":
            return None, coeff
        return "zero", coeff
    if arg.leading_sign() < 0:
        arg = -arg
        if kind == "sin":
            coeff = -coeff
    return (kind, arg), coeff


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    d = dict(m1)
    for v, e in m2:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


class EnergyExpr:
    """Immutable canonical sum of monomial x trig terms."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping | None = None):
        self._terms: dict = {}
        if terms:
            for key, c in terms.items():
                c = PiRational.coerce(c)
                if c:
                    self._terms[key] = c
        self._hash = None

    @classmethod
    def _from_pairs(cls, pairs: Iterable) -> "EnergyExpr":
        acc: dict = {}
        for (mono, trig), c in pairs:
            if trig is not None:
                res, c = _normalise_trig(trig[0], trig[1], c)
                if res == "zero":
                    continue
                trig = res
            key = (mono, trig)
            acc[key] = acc.get(key, ZERO) + c
        return cls({k: c for k, c in acc.items() if c})

    # inspection -----------------------------------------------------------
    def items(self):
        return self._terms.items()

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction, PiRational)):
            other = const(other)
        if not isinstance(other, EnergyExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def variables(self) -> set[int]:
        out = set()
        for (mono, trig) in self._terms:
            out.update(v for v, _ in mono)
            if trig is not None:
                out |= trig[1].variables()
        return out

    def depends_on(self, v: int) -> bool:
        return v in self.variables()

    def has_trig_in(self, vs: Iterable[int]) -> bool:
        vs = set(vs)
        return any(trig is not None and trig[1].variables() & vs for (_, trig) in self._terms)

    def degree_in(self, vs: Iterable[int]) -> int:
        """Polynomial degree in the given variables (trig factors ignored)."""
        vs = set(vs)
        return max((sum(e for v, e in mono if v in vs) for (mono, _) in self._terms), default=0)

    def degree(self) -> int:
        return max((sum(e for _, e in mono) for (mono, _) in self._terms), default=0)

    def is_polynomial(self) -> bool:
        return all(trig is None for (_, trig) in self._terms)

    def is_constant(self) -> bool:
        return not self.variables()

    def constant_term(self) -> PiRational:
        return self._terms.get(((), None), ZERO)

    def is_affine(self) -> bool:
        return self.is_polynomial() and self.degree() <= 1

    def linear_coefficient(self, v: int) -> PiRational:
        return self._terms.get((((v, 1),), None), ZERO)

    def trig_terms(self):
        return [(k, c) for k, c in self._terms.items() if k[1] is not None]

    # arithmetic ------------------------------------------------------------
    def __add__(self, other) -> "EnergyExpr":
        other = _as_expr(other)
        d = dict(self._terms)
        for k, c in other._terms.items():
            d[k] = d.get(k, ZERO) + c
        return EnergyExpr({k: c for k, c in d.items() if c})

    __radd__ = __add__

    def __neg__(self) -> "EnergyExpr":
        return EnergyExpr({k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> "EnergyExpr":
        return self + (-_as_expr(other))

    def __rsub__(self, other) -> "EnergyExpr":
        return _as_expr(other) - self

    def scale(self, c) -> "EnergyExpr":
        c = PiRational.coerce(c)
        if not c:
            return EnergyExpr()
        return EnergyExpr({k: c * v for k, v in self._terms.items()})

    def __mul__(self, other) -> "EnergyExpr":
        if isinstance(other, (int, Fraction, PiRational)):
            return self.scale(other)
        other = _as_expr(other)
        pairs = []
        half = PiRational(Fraction(1, 2))
        for (m1, t1), c1 in self._terms.items():
            for (m2, t2), c2 in other._terms.items():
                mono = _mono_mul(m1, m2)
                c = c1 * c2
                if t1 is None or t2 is None:
                    pairs.append(((mono, t1 if t2 is None else t2), c))
                    continue
                (k1, a), (k2, b) = t1, t2
                hc = half * c
                if k1 == "cos" and k2 == "cos":
                    pairs += [((mono, ("cos", a - b)), hc), ((mono, ("cos", a + b)), hc)]
                elif k1 == "sin" and k2 == "sin":
                    pairs += [((mono, ("cos", a - b)), hc), ((mono, ("cos", a + b)), -hc)]
                elif k1 == "sin":
                    pairs += [((mono, ("sin", a + b)), hc), ((mono, ("sin", a - b)), hc)]
                else:
                    pairs += [((mono, ("sin", a + b)), hc), ((mono, ("sin", a - b)), -hc)]
        return EnergyExpr._from_pairs(pairs)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "EnergyExpr":
        other = _as_expr(other)
        if not other.is_constant() or not other.is_polynomial():
            raise ZeroDivisionError("division only by constants")
        return self.scale(other.constant_term().inverse())

    def __pow__(self, n: int) -> "EnergyExpr":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        out = const(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # calculus ------------------------------------------------------------
    def diff(self, v: int) -> "EnergyExpr":
        pairs = []
        for (mono, trig), c in self._terms.items():
            d = dict(mono)
            e = d.get(v, 0)
            if e:
                d2 = dict(d)
                if e == 1:
                    del d2[v]
                else:
                    d2[v] = e - 1
                pairs.append(((tuple(sorted(d2.items())), trig), c * e))
            if trig is not None:
                kind, arg = trig
                a = arg.coeff(v)
                if a:
                    if kind == "cos":
                        pairs.append(((mono, ("sin", arg)), -(c * a)))
                    else:
                        pairs.append(((mono, ("cos", arg)), c * a))
        return EnergyExpr._from_pairs(pairs)

    def gradient(self, n: int) -> list["EnergyExpr"]:
        return [self.diff(i) for i in range(n)]

    # substitution ------------------------------------------------------------
    def substitute(self, mapping: Mapping[int, "EnergyExpr"]) -> "EnergyExpr":
        """Replace variables by expressions; trig arguments need affine images."""
        cache: dict = {}

        def img(v):
            return mapping[v] if v in mapping else var(v)

        def power(v, e):
            key = (v, e)
            if key not in cache:
                cache[key] = img(v) ** e
            return cache[key]

        out = EnergyExpr()
        for (mono, trig), c in self._terms.items():
            t = const(c)
            for v, e in mono:
                t = t * power(v, e)
            if trig is not None:
                kind, arg = trig
                new_arg = Affine([], arg.offset)
                for v, a in arg.linear:
                    image = img(v)
                    if not image.is_affine():
                        raise ValueError("trig arguments admit only affine substitutions")
                    new_arg = new_arg + _affine_from_expr(image).times(a)
                t = t * _trig(kind, new_arg)
            out = out + t
        return out

    def substitute_affine(self, rows: Sequence[Sequence], offsets: Sequence | None = None) -> "EnergyExpr":
        """x_i -> sum_j rows[i][j] z_j + offsets[i] (a linear change of variables)."""
        mapping = {}
        for i, r in enumerate(rows):
            terms = {(((j, 1),), None): PiRational.coerce(a) for j, a in enumerate(r) if a}
            off = offsets[i] if offsets is not None else 0
            if off:
                terms[((), None)] = PiRational.coerce(off)
            mapping[i] = EnergyExpr(terms)
        vars_used = self.variables()
        for v in vars_used:
            if v not in mapping:
                raise ValueError(f"variable {v} has no image")
        return self.substitute(mapping)

    def rename(self, mapping: Mapping[int, int]) -> "EnergyExpr":
        return self.substitute({a: var(b) for a, b in mapping.items()})

    # numerics ------------------------------------------------------------
    def evaluate(self, x: Sequence[float]) -> float:
        return self.compile()(x)

    def compile(self) -> Callable[[Sequence[float]], float]:
        """Return a fast float evaluator for this expression."""
        terms = []
        for (mono, trig), c in self._terms.items():
            fc = float(c)
            if trig is None:
                terms.append((fc, mono, None, None, None))
            else:
                kind, arg = trig
                lin = [(v, float(a)) for v, a in arg.linear]
                terms.append((fc, mono, math.cos if kind == "cos" else math.sin, lin, float(arg.offset)))

        def f(x):
            s = 0.0
            for fc, mono, fn, lin, off in terms:
                t = fc
                for v, e in mono:
                    t *= x[v] ** e
                if fn is not None:
                    u = off
                    for v, a in lin:
                        u += a * x[v]
                    t *= fn(u)
                s += t
            return s

        return f

    def bounds(self) -> tuple[Fraction, Fraction] | None:
        """Rational enclosure of the range over all real arguments, if bounded."""
        lo = hi = Fraction(0)
        for (mono, trig), c in self._terms.items():
            if mono:
                return None
            if trig is None:
                a, b = c.interval()
                lo += a
                hi += b
            else:
                m = c.abs_upper()
                lo -= m
                hi += m
        return lo, hi

    # text ------------------------------------------------------------
    def to_text(self, names: Sequence[str] | None = None) -> str:
        if not self._terms:
            return "0"
        names = names or _default_names(self)
        parts = []
        for key in sorted(self._terms, key=_term_sort_key):
            mono, trig = key
            c = self._terms[key]
            factors = []
            for v, e in mono:
                factors.append(names[v] if e == 1 else f"{names[v]}^{e}")
            if trig is not None:
                factors.append(f"{trig[0]}({trig[1].to_text(names)})")
            if not factors:
                parts.append(c.to_text())
            else:
                parts.append(_coef_times(c, "*".join(factors)))
        return _join_signed(parts)

    def __repr__(self) -> str:
        return f"EnergyExpr({self.to_text()})"


def _default_names(e: EnergyExpr) -> list[str]:
    n = max(e.variables(), default=-1) + 1
    return [f"z{i}" for i in range(n)]


def _term_sort_key(key):
    mono, trig = key
    deg = sum(e for _, e in mono)
    return (trig is not None, -deg, mono, () if trig is None else (trig[0], _affine_sort_key(trig[1])))


def _affine_from_expr(e: EnergyExpr) -> "_ScalableAffine":
    lin = {}
    off = ZERO
    for (mono, trig), c in e.items():
        if not mono:
            off = off + c
        else:
            (v, _), = mono
            lin[v] = c
    return _ScalableAffine(lin, off)


class _ScalableAffine(Affine):
    __slots__ = ()

    def times(self, a: PiRational) -> Affine:
        return Affine([(v, a * c) for v, c in self.linear], a * self.offset)


def _as_expr(x) -> EnergyExpr:
    if isinstance(x, EnergyExpr):
        return x
    return const(x)


def _trig(kind: str, arg: Affine) -> EnergyExpr:
    return EnergyExpr._from_pairs([(((), (kind, arg)), ONE)])


# smart constructors mirroring the expression-tree node kinds


def const(c) -> EnergyExpr:
    c = PiRational.coerce(c)
    return EnergyExpr({((), None): c}) if c else EnergyExpr()


def var(i: int) -> EnergyExpr:
    return EnergyExpr({(((i, 1),), None): ONE})


def _trig_of(kind: str, e: EnergyExpr) -> EnergyExpr:
    if not e.is_affine():
        raise ValueError(f"{kind} argument must be affine in the variables")
    aff = _affine_from_expr(e)
    return _trig(kind, Affine(aff.linear, aff.offset))


def cos(e: EnergyExpr) -> EnergyExpr:
    return _trig_of("cos", _as_expr(e))


def sin(e: EnergyExpr) -> EnergyExpr:
    return _trig_of("sin", _as_expr(e))


# ---------------------------------------------------------------------------
# text parser


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column + 1})")
        self.column = column


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        val = m.group(kind)
        if val == "**":
            val = "^"
        toks.append((kind, val, start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


def parse_expr(text: str, names: Mapping[str, int] | Sequence[str]) -> EnergyExpr:
    """Parse arithmetic text (+ - * / ^, cos, sin, pi, numbers, names).

    Division is allowed only by constants and powers must be non-negative
    integers, so the result is always a canonical EnergyExpr.
    """
    if not isinstance(names, Mapping):
        names = {n: i for i, n in enumerate(names)}
    toks = _tokenize(text)
    pos = 0

    def peek():
        return toks[pos]

    def take(expected=None):
        nonlocal pos
        t = toks[pos]
        if expected is not None and t[1] != expected:
            raise ExprSyntaxError(f"expected {expected!r}, found {t[1] or 'end'!r}", t[2])
        pos += 1
        return t

    def expr():
        e = term()
        while peek()[1] in ("+", "-"):
            op = take()[1]
            rhs = term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term():
        e = unary()
        while peek()[1] in ("*", "/"):
            _, op, col = take()
            rhs = unary()
            if op == "*":
                e = e * rhs
            else:
                if not (rhs.is_constant() and rhs.is_polynomial()) or not rhs.constant_term():
                    raise ExprSyntaxError("division only by nonzero constants", col)
                c = rhs.constant_term()
                if not c.is_monomial():
                    raise ExprSyntaxError("divisor must be a single rational times a power of pi", col)
                e = e / rhs
        return e

    def unary():
        if peek()[1] == "-":
            take()
            return -unary()
        if peek()[1] == "+":
            take()
            return unary()
        return power()

    def power():
        base = atom()
        if peek()[1] == "^":
            _, _, col = take()
            sign = 1
            if peek()[1] == "-":
                take()
                sign = -1
            t = take()
            if t[0] != "num" or not t[1].isdigit() or sign < 0:
                raise ExprSyntaxError("exponent must be a non-negative integer", col)
            return base ** int(t[1])
        return base

    def atom():
        kind, val, col = take()
        if kind == "num":
            return const(Fraction(val))
        if kind == "name":
            if val == "pi":
                return const(PiRational.pi())
            if val in ("cos", "sin"):
                take("(")
                inner = expr()
                take(")")
                try:
                    return cos(inner) if val == "cos" else sin(inner)
                except ValueError as exc:
                    raise ExprSyntaxError(str(exc), col) from None
            if val not in names:
                raise ExprSyntaxError(f"unknown symbol {val!r}", col)
            return var(names[val])
        if val == "(":
            e = expr()
            take(")")
            return e
        raise ExprSyntaxError(f"unexpected token {val or 'end'!r}", col)

    e = expr()
    if peek()[0] != "end":
        raise ExprSyntaxError(f"trailing input {peek()[1]!r}", peek()[2])
    return e


def parse_scalar(text: str) -> PiRational:
    """Exact parameter value: rationals, decimals and factors of pi."""
    e = parse_expr(text, {})
    return e.constant_term() if not e.is_zero() else ZERO


# ---------------------------------------------------------------------------
# total energy and the source coupling


@dataclass(frozen=True)
class SourceCoupling:
    """Source term S(t).z = sum_k s_k(t) * sigma_k(z).

    ``exprs`` holds one affine expression sigma_k per source waveform; the
    waveforms themselves (objects with ``value`` and ``derivative``) ride
    alongside for numerics.
    """

    names: tuple[str, ...]
    exprs: tuple[EnergyExpr, ...]
    waveforms: tuple = ()

    @classmethod
    def empty(cls) -> "SourceCoupling":
        return cls((), (), ())

    @classmethod
    def from_matrix(cls, names, matrix: RationalMatrix, waveforms=()) -> "SourceCoupling":
        exprs = []
        for k in range(matrix.rows):
            terms = {(((j, 1),), None): PiRational(x) for j, x in enumerate(matrix.row(k)) if x}
            exprs.append(EnergyExpr(terms))
        return cls(tuple(names), tuple(exprs), tuple(waveforms))

    def __len__(self) -> int:
        return len(self.names)

    def matrix(self, dim: int) -> RationalMatrix:
        """Rows of linear coefficients; requires every sigma_k to be affine."""
        rows = []
        for e in self.exprs:
            if not e.is_affine():
                raise ValueError("source coupling is not affine")
            rows.append([e.linear_coefficient(j).as_fraction() for j in range(dim)])
        return RationalMatrix(len(rows), dim, rows) if rows else RationalMatrix(0, dim)

    def substitute(self, mapping) -> "SourceCoupling":
        return replace(self, exprs=tuple(e.substitute(mapping) for e in self.exprs))

    def substitute_affine(self, rows, offsets=None) -> "SourceCoupling":
        return replace(self, exprs=tuple(e.substitute_affine(rows, offsets) for e in self.exprs))

    def drop_constants(self) -> "SourceCoupling":
        """Remove coordinate-independent parts (time-only terms)."""
        return replace(self, exprs=tuple(e - const(e.constant_term()) for e in self.exprs))

    def active(self) -> list[int]:
        return [k for k, w in enumerate(self.waveforms) if not w.is_zero()] if self.waveforms \
            else list(range(len(self.names)))

    def values(self, t: float) -> list[float]:
        return [w.value(t) for w in self.waveforms]

    def derivative_values(self, t: float) -> list[float]:
        return [w.derivative().value(t) for w in self.waveforms]

    def total(self, t: float) -> EnergyExpr:
        out = EnergyExpr()
        for e, v in zip(self.exprs, self.values(t)):
            out = out + e.scale(PiRational(Fraction(v).limit_denominator(10**12)))
        return out

    def to_text(self, names: Sequence[str]) -> str:
        parts = []
        for n, e in zip(self.names, self.exprs):
            if e:
                parts.append(f"{n}(t)*({e.to_text(names)})")
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class TotalEnergy:
    """H(z) = sum of branch energies at (K z + offsets)."""

    h: EnergyExpr
    offsets: tuple[Fraction, ...]
    dim: int


def total_energy(graph, space, offsets: Sequence | None = None) -> TotalEnergy:
    """Sum capacitor energies of branch charges and inductor energies of fluxes."""
    nb = len(graph.branches)
    offsets = tuple(to_fraction(x) for x in (offsets if offsets is not None else [0] * 2 * nb))
    if len(offsets) != 2 * nb:
        raise ValueError("offsets must have length 2B")
    k = space.k
    h = EnergyExpr()
    for b, br in enumerate(graph.branches):
        if br.energy is None:
            continue
        row = b if br.kind.is_charge_energy else nb + b
        arg = EnergyExpr(
            {(((j, 1),), None): PiRational(x) for j, x in enumerate(k.row(row)) if x}
        ) + const(offsets[row])
        h = h + br.energy.substitute({0: arg})
    return TotalEnergy(h, offsets, k.cols)


def gradient(h: TotalEnergy | EnergyExpr, dim: int | None = None) -> list[EnergyExpr]:
    e = h.h if isinstance(h, TotalEnergy) else h
    n = dim if dim is not None else (h.dim if isinstance(h, TotalEnergy) else max(e.variables(), default=-1) + 1)
    return e.gradient(n)


def hessian_entry(h: TotalEnergy | EnergyExpr, i: int, j: int) -> EnergyExpr:
    e = h.h if isinstance(h, TotalEnergy) else h
    return e.diff(i).diff(j)


# ---------------------------------------------------------------------------
# extremum equations dH/dw = 0


class Verdict:
    INVERTIBLE = "Invertible"
    INCONCLUSIVE = "Inconclusive"


class LinearDependentOnVar(ValueError):
    """H is affine along a combination of the requested variables."""

    def __init__(self, message: str, direction: Sequence[Fraction] = ()):
        super().__init__(message)
        self.direction = tuple(direction)


@dataclass(frozen=True)
class Solution:
    """Affine solution w_i = subs[w_i](xi) + sum_k source_gain[i][k] s_k(t)."""

    vars: tuple[int, ...]
    subs: dict
    source_gain: RationalMatrix
    hessian: RationalMatrix


@dataclass(frozen=True)
class Implicit:
    """Equations dH/dw_i + source terms = 0 that stay implicit."""

    vars: tuple[int, ...]
    equations: tuple[EnergyExpr, ...]
    source_terms: RationalMatrix
    invertibility: str
    hessian: tuple[tuple[EnergyExpr, ...], ...]
    detail: str = ""


def _rational_matrix_of(entries: Sequence[Sequence[PiRational]]) -> RationalMatrix | None:
    if not all(c.is_rational() for r in entries for c in r):
        return None
    return RationalMatrix.from_rows([[c.as_fraction() for c in r] for r in entries])


def hessian_lower_bound_certified(hess: Sequence[Sequence[EnergyExpr]]) -> tuple[bool, str]:
    """Interval certificate that the symmetric expression matrix is positive definite.

    Each entry is a constant plus trig terms (positive even monomials on the
    diagonal are dropped, they only add a PSD part). Every trig factor lies in [-1, 1],
    so the matrix dominates ``M0 - sum_k |C_k|`` where C_k collects the
    coefficients of one trig atom. Rank-one atoms use their exact outer
    product; others fall back to a Gershgorin diagonal. The bound is then
    checked exactly with LDL^T.
    """
    n = len(hess)
    m0 = [[ZERO] * n for _ in range(n)]
    atoms: dict = {}
    for i in range(n):
        for j in range(n):
            for (mono, trig), c in hess[i][j].items():
                if mono:
                    # c * prod x^(2k) with c > 0 on the diagonal only adds a PSD term
                    if i == j and trig is None and c.sign() > 0 and all(e % 2 == 0 for _, e in mono):
                        continue
                    return False, "entry has a polynomial part that is not a positive even diagonal term"
                if trig is None:
                    m0[i][j] = m0[i][j] + c
                else:
                    atoms.setdefault(trig, [[ZERO] * n for _ in range(n)])[i][j] = c
    base = _rational_matrix_of(m0)
    if base is None:
        return False, "constant part is not rational"
    bound = base.tolist()
    for trig, mat in atoms.items():
        rank1 = _rank_one_split(mat)
        if rank1 is not None:
            lam, v = rank1
            m = lam.abs_upper()
            for i in range(n):
                for j in range(n):
                    bound[i][j] -= m * v[i] * v[j]
        else:
            for i in range(n):
                bound[i][i] -= sum(mat[i][j].abs_upper() for j in range(n))
    bm = RationalMatrix.from_rows(bound)
    if is_positive_definite(bm):
        return True, "lower bound matrix is positive definite"
    return False, "lower bound matrix is not positive definite"


def _rank_one_split(mat) -> tuple[PiRational, list[Fraction]] | None:
    """Write mat = lam * v v^T with rational v, lam in Q[pi,1/pi], if possible."""
    n = len(mat)
    piv = next((i for i in range(n) if mat[i][i]), None)
    if piv is None:
        return None
    d = mat[piv][piv]
    if not d.is_monomial():
        return None
    v = []
    for i in range(n):
        r = mat[i][piv] / d
        if not r.is_rational():
            return None
        v.append(r.as_fraction())
    for i in range(n):
        for j in range(n):
            if mat[i][j] != d * PiRational(v[i] * v[j]):
                return None
    return d, v


def solve_extremum(h: TotalEnergy | EnergyExpr, vars: Sequence[int],
                   sources: SourceCoupling | None = None) -> Solution | Implicit:
    """Solve dH/dw = 0 (plus linear source terms) for the variables ``vars``."""
    if not vars:
        raise ValueError("solve_extremum needs at least one variable")
    e = h.h if isinstance(h, TotalEnergy) else h
    vars = tuple(vars)
    n_src = len(sources) if sources is not None else 0
    src_m = RationalMatrix(len(vars), 0)
    if n_src:
        src = []
        for w in vars:
            row = []
            for sig in sources.exprs:
                d = sig.diff(w)
                if not d.is_constant() or not d.constant_term().is_rational():
                    raise ValueError("source coupling must be affine with rational coefficients")
                row.append(d.constant_term().as_fraction())
            src.append(row)
        src_m = RationalMatrix.from_rows(src)
    grads = [e.diff(w) for w in vars]
    hess = tuple(tuple(g.diff(w) for w in vars) for g in grads)
    if all(hij.is_constant() for row in hess for hij in row):
        hm = _rational_matrix_of([[hij.constant_term() for hij in row] for row in hess])
        if hm is None:
            raise ValueError("curvature along the solved variables must be rational")
        try:
            hinv = inverse(hm)
        except SingularMatrix:
            raise LinearDependentOnVar("energy is affine along a zero-mode direction") from None
        zero_w = {w: const(0) for w in vars}
        g0 = [g.substitute(zero_w) for g in grads]
        subs = {}
        for i, w in enumerate(vars):
            acc = EnergyExpr()
            for j in range(len(vars)):
                if hinv[i, j]:
                    acc = acc - g0[j].scale(hinv[i, j])
            subs[w] = acc
        gain = (-hinv) @ src_m if n_src else RationalMatrix(len(vars), 0)
        return Solution(vars, subs, gain, hm)
    ok, detail = hessian_lower_bound_certified(hess)
    verdict = Verdict.INVERTIBLE if ok else Verdict.INCONCLUSIVE
    return Implicit(vars, tuple(grads), src_m, verdict, hess, detail)
