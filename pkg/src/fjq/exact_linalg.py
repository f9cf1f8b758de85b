"""Exact rational dense linear algebra.

Everything here works over :class:`fractions.Fraction`. Matrices are small
(a few hundred columns at most) but very sparse, so products and eliminations
skip zero entries explicitly.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DimensionMismatch",
    "NotAntisymmetric",
    "SingularMatrix",
    "RationalMatrix",
    "to_fraction",
    "rref",
    "rank",
    "kernel_basis",
    "matmul",
    "transpose",
    "inverse",
    "solve",
    "darboux_congruence",
    "canonical_block",
    "ldlt_pivots",
    "is_psd",
    "row_space_equal",
    "column_space_equal",
]

_ZERO = Fraction(0)
_ONE = Fraction(1)


class DimensionMismatch(ValueError):
    pass


class NotAntisymmetric(ValueError):
    pass


class SingularMatrix(ValueError):
    pass


def to_fraction(x) -> Fraction:
    """Exact conversion; floats are rejected so nothing inexact sneaks in."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        return Fraction(int(x))
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        raise TypeError("refusing to build an exact matrix from a float")
    return Fraction(x)


class RationalMatrix:
    """Immutable dense matrix of Fractions, stored row-major as tuples."""

    __slots__ = ("rows", "cols", "_data")

    def __init__(self, rows: int, cols: int, data: Sequence[Sequence] | None = None):
        self.rows = rows
        self.cols = cols
        if data is None:
            self._data = tuple((_ZERO,) * cols for _ in range(rows))
            return
        if len(data) != rows or any(len(r) != cols for r in data):
            raise DimensionMismatch(f"expected {rows}x{cols} entries")
        self._data = tuple(tuple(to_fraction(x) for x in r) for r in data)

    # construction -------------------------------------------------------
    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], cols: int | None = None) -> "RationalMatrix":
        rows = [list(r) for r in rows]
        if not rows:
            return cls(0, cols or 0)
        return cls(len(rows), len(rows[0]), rows)

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence], rows: int) -> "RationalMatrix":
        if not columns:
            return cls(rows, 0)
        return cls(rows, len(columns), [[c[i] for c in columns] for i in range(rows)])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RationalMatrix":
        return cls(rows, cols)

    @classmethod
    def identity(cls, n: int) -> "RationalMatrix":
        return cls._raw(n, n, [[_ONE if i == j else _ZERO for j in range(n)] for i in range(n)])

    @classmethod
    def diag(cls, values: Sequence) -> "RationalMatrix":
        n = len(values)
        vals = [to_fraction(v) for v in values]
        return cls._raw(n, n, [[vals[i] if i == j else _ZERO for j in range(n)] for i in range(n)])

    @classmethod
    def _raw(cls, rows: int, cols: int, data) -> "RationalMatrix":
        # trusted fast path: data already holds Fractions of the right shape
        m = cls.__new__(cls)
        m.rows = rows
        m.cols = cols
        m._data = tuple(tuple(r) for r in data)
        return m

    # access --------------------------------------------------------------
    def __getitem__(self, idx):
        i, j = idx
        return self._data[i][j]

    def row(self, i: int) -> tuple:
        return self._data[i]

    def col(self, j: int) -> tuple:
        return tuple(r[j] for r in self._data)

    def tolist(self) -> list[list[Fraction]]:
        return [list(r) for r in self._data]

    def columns(self) -> list[tuple]:
        return [self.col(j) for j in range(self.cols)]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def T(self) -> "RationalMatrix":
        return transpose(self)

    def submatrix(self, rows: Iterable[int] | None = None, cols: Iterable[int] | None = None) -> "RationalMatrix":
        ri = list(range(self.rows)) if rows is None else list(rows)
        ci = list(range(self.cols)) if cols is None else list(cols)
        return RationalMatrix._raw(len(ri), len(ci), [[self._data[i][j] for j in ci] for i in ri])

    def to_numpy(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        for i, r in enumerate(self._data):
            for j, x in enumerate(r):
                if x:
                    out[i, j] = float(x)
        return out

    def is_zero(self) -> bool:
        return all(not x for r in self._data for x in r)

    def is_square(self) -> bool:
        return self.rows == self.cols

    # arithmetic ------------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, RationalMatrix):
            return NotImplemented
        return self.shape == other.shape and self._data == other._data

    def __hash__(self):
        return hash((self.rows, self.cols, self._data))

    def __add__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.shape != other.shape:
            raise DimensionMismatch(f"{self.shape} + {other.shape}")
        return RationalMatrix._raw(
            self.rows, self.cols,
            [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self._data, other._data)],
        )

    def __neg__(self) -> "RationalMatrix":
        return RationalMatrix._raw(self.rows, self.cols, [[-a for a in r] for r in self._data])

    def __sub__(self, other: "RationalMatrix") -> "RationalMatrix":
        return self + (-other)

    def scale(self, c) -> "RationalMatrix":
        c = to_fraction(c)
        return RationalMatrix._raw(self.rows, self.cols, [[c * a for a in r] for r in self._data])

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        return matmul(self, other)

    def apply(self, vec: Sequence) -> list[Fraction]:
        """Matrix-vector product with an exact vector."""
        if len(vec) != self.cols:
            raise DimensionMismatch(f"{self.shape} @ vector of length {len(vec)}")
        v = [to_fraction(x) for x in vec]
        nz = [(j, x) for j, x in enumerate(v) if x]
        return [sum((r[j] * x for j, x in nz), _ZERO) for r in self._data]

    def hstack(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.rows != other.rows:
            raise DimensionMismatch("hstack needs equal row counts")
        return RationalMatrix._raw(self.rows, self.cols + other.cols,
                                   [a + b for a, b in zip(self._data, other._data)])

    def vstack(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.cols != other.cols and self.rows and other.rows:
            raise DimensionMismatch("vstack needs equal column counts")
        cols = self.cols if self.rows else other.cols
        return RationalMatrix._raw(self.rows + other.rows, cols, self._data + other._data)

    def is_antisymmetric(self) -> bool:
        if not self.is_square():
            return False
        d = self._data
        return all(d[i][j] == -d[j][i] for i in range(self.rows) for j in range(i, self.cols))

    def is_symmetric(self) -> bool:
        if not self.is_square():
            return False
        d = self._data
        return all(d[i][j] == d[j][i] for i in range(self.rows) for j in range(i + 1, self.cols))

    def __repr__(self) -> str:
        body = "; ".join(" ".join(str(x) for x in r) for r in self._data)
        return f"RationalMatrix({self.rows}x{self.cols}: [{body}])"


def block_diag(*blocks: RationalMatrix) -> RationalMatrix:
    rows = sum(b.rows for b in blocks)
    cols = sum(b.cols for b in blocks)
    data = []
    off = 0
    for b in blocks:
        for r in b._data:
            data.append((_ZERO,) * off + r + (_ZERO,) * (cols - off - b.cols))
        off += b.cols
    return RationalMatrix._raw(rows, cols, data)


def transpose(m: RationalMatrix) -> RationalMatrix:
    return RationalMatrix._raw(m.cols, m.rows, list(zip(*m._data)) if m.rows else [() for _ in range(m.cols)])


def matmul(a: RationalMatrix, b: RationalMatrix) -> RationalMatrix:
    if a.cols != b.rows:
        raise DimensionMismatch(f"{a.shape} @ {b.shape}")
    b_nz = [[(j, x) for j, x in enumerate(r) if x] for r in b._data]
    out = []
    for r in a._data:
        acc = [_ZERO] * b.cols
        for k, x in enumerate(r):
            if not x:
                continue
            for j, y in b_nz[k]:
                acc[j] += x * y
        out.append(acc)
    return RationalMatrix._raw(a.rows, b.cols, out)


def rref(m: RationalMatrix) -> tuple[RationalMatrix, list[int]]:
    """Reduced row echelon form with first-nonzero pivoting in column order.

    Returns the full-size RREF (zero rows kept at the bottom) and the pivot
    columns in increasing order.
    """
    a = [list(r) for r in m._data]
    n_rows, n_cols = m.rows, m.cols
    pivots: list[int] = []
    pr = 0
    for c in range(n_cols):
        if pr == n_rows:
            break
        sel = next((i for i in range(pr, n_rows) if a[i][c]), None)
        if sel is None:
            continue
        a[pr], a[sel] = a[sel], a[pr]
        p = a[pr][c]
        if p != 1:
            inv = 1 / p
            a[pr] = [x * inv if x else _ZERO for x in a[pr]]
        prow = a[pr]
        nz = [(j, x) for j, x in enumerate(prow) if x and j >= c]
        for i in range(n_rows):
            if i == pr:
                continue
            f = a[i][c]
            if not f:
                continue
            ri = a[i]
            for j, x in nz:
                ri[j] -= f * x
        pivots.append(c)
        pr += 1
    return RationalMatrix._raw(n_rows, n_cols, a), pivots


def rank(m: RationalMatrix) -> int:
    return len(rref(m)[1])


def nonzero_rows(m: RationalMatrix) -> RationalMatrix:
    keep = [i for i in range(m.rows) if any(m.row(i))]
    return m.submatrix(rows=keep)


def kernel_basis(m: RationalMatrix) -> RationalMatrix:
    """Canonical free-variable basis of ker(m), one column per free variable.

    Free variables are set to one, one at a time, in increasing column order.
    """
    r, pivots = rref(m)
    piv_set = set(pivots)
    free = [c for c in range(m.cols) if c not in piv_set]
    cols = []
    for f in free:
        v = [_ZERO] * m.cols
        v[f] = _ONE
        for i, p in enumerate(pivots):
            x = r[i, f]
            if x:
                v[p] = -x
        cols.append(v)
    return RationalMatrix.from_columns(cols, m.cols)


def inverse(m: RationalMatrix) -> RationalMatrix:
    if not m.is_square():
        raise DimensionMismatch("inverse of a non-square matrix")
    n = m.rows
    aug = m.hstack(RationalMatrix.identity(n))
    r, pivots = rref(aug)
    if pivots[:n] != list(range(n)):
        raise SingularMatrix("matrix is singular")
    return r.submatrix(rows=range(n), cols=range(n, 2 * n))


def solve(a: RationalMatrix, b: RationalMatrix) -> RationalMatrix:
    """Particular solution x of a x = b (free variables set to zero)."""
    if a.rows != b.rows:
        raise DimensionMismatch(f"solve {a.shape} with rhs {b.shape}")
    r, pivots = rref(a.hstack(b))
    if any(p >= a.cols for p in pivots):
        raise SingularMatrix("inconsistent linear system")
    x = [[_ZERO] * b.cols for _ in range(a.cols)]
    for i, p in enumerate(pivots):
        for j in range(b.cols):
            x[p][j] = r[i, a.cols + j]
    return RationalMatrix._raw(a.cols, b.cols, x)


def canonical_block(pairs: int, zeros: int) -> RationalMatrix:
    """[[0, I_p], [-I_p, 0]] followed by a zero block of size `zeros`."""
    n = 2 * pairs + zeros
    data = [[_ZERO] * n for _ in range(n)]
    for i in range(pairs):
        data[i][pairs + i] = _ONE
        data[pairs + i][i] = -_ONE
    return RationalMatrix._raw(n, n, data)


def _form(a: RationalMatrix, u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    s = _ZERO
    for i, x in enumerate(u):
        if not x:
            continue
        row = a._data[i]
        for j, y in enumerate(v):
            if y and row[j]:
                s += x * row[j] * y
    return s


def darboux_congruence(a: RationalMatrix) -> tuple[RationalMatrix, int, int]:
    """Symplectic Gram-Schmidt: S with S^T a S = canonical_block(p, z).

    The lowest-index remaining basis vector with a nonzero pairing is paired
    with the lowest-index partner, the partner is normalised, and all other
    vectors are projected off the pair. Leftover vectors span ker(a).
    """
    if not a.is_antisymmetric():
        raise NotAntisymmetric("darboux_congruence needs an antisymmetric square matrix")
    n = a.rows
    basis = [[_ONE if i == j else _ZERO for i in range(n)] for j in range(n)]
    firsts: list[list[Fraction]] = []
    seconds: list[list[Fraction]] = []
    while True:
        found = None
        for ii, e in enumerate(basis):
            for jj in range(len(basis)):
                if jj != ii and _form(a, e, basis[jj]):
                    found = (ii, jj)
                    break
            if found:
                break
        if found is None:
            break
        ii, jj = found
        e = basis[ii]
        w = _form(a, e, basis[jj])
        f = [x / w for x in basis[jj]]
        rest = []
        for k, v in enumerate(basis):
            if k in (ii, jj):
                continue
            avf = _form(a, v, f)
            ave = _form(a, v, e)
            if avf or ave:
                v = [vx - avf * ex + ave * fx for vx, ex, fx in zip(v, e, f)]
            rest.append(v)
        firsts.append(e)
        seconds.append(f)
        basis = rest
    p = len(firsts)
    s = RationalMatrix.from_columns(firsts + seconds + basis, n)
    return s, p, len(basis)


def ldlt_pivots(m: RationalMatrix) -> list[Fraction]:
    """Pivots of an exact symmetric LDL^T with diagonal pivoting.

    A zero pivot whose remaining column is nonzero means the matrix is
    indefinite; that is reported with a sentinel pivot of -1.
    """
    if not m.is_symmetric():
        raise ValueError("ldlt_pivots needs a symmetric matrix")
    a = [list(r) for r in m._data]
    n = m.rows
    active = list(range(n))
    pivots: list[Fraction] = []
    while active:
        k = next((i for i in active if a[i][i]), None)
        if k is None:
            if any(a[i][j] for i in active for j in active):
                pivots.append(Fraction(-1))
            else:
                pivots.extend([_ZERO] * len(active))
            break
        d = a[k][k]
        pivots.append(d)
        active.remove(k)
        for i in active:
            lik = a[i][k]
            if not lik:
                continue
            f = lik / d
            for j in active:
                if a[k][j]:
                    a[i][j] -= f * a[k][j]
    return pivots


def is_psd(m: RationalMatrix) -> bool:
    return all(p >= 0 for p in ldlt_pivots(m))


def is_positive_definite(m: RationalMatrix) -> bool:
    piv = ldlt_pivots(m)
    return len(piv) == m.rows and all(p > 0 for p in piv)


def row_space_equal(a: RationalMatrix, b: RationalMatrix) -> bool:
    if a.cols != b.cols:
        return False
    ra = nonzero_rows(rref(a)[0])
    rb = nonzero_rows(rref(b)[0])
    return ra == rb


def column_space_equal(a: RationalMatrix, b: RationalMatrix) -> bool:
    return row_space_equal(transpose(a), transpose(b))
