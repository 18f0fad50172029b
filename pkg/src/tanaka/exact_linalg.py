"""Exact linear algebra over the rationals.

Everything here works on :class:`fractions.Fraction`, which is always kept in
lowest terms with a positive denominator.  The dense :class:`RatMatrix` API is
a thin layer over a sparse row-reduction kernel (rows as ``{column: value}``
dicts) that the derivation solver calls directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

SparseRow = dict[int, Fraction]


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass int, Fraction or 'p/q' strings")
    return Fraction(value)


@dataclass(frozen=True)
class RatMatrix:
    """Dense row-major matrix of Fractions."""

    rows: int
    cols: int
    entries: tuple[Fraction, ...]

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("negative matrix shape")
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(
                f"entries length {len(self.entries)} != {self.rows}x{self.cols}")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], cols: int | None = None) -> RatMatrix:
        rows = [list(r) for r in rows]
        if cols is None:
            cols = len(rows[0]) if rows else 0
        for r in rows:
            if len(r) != cols:
                raise ValueError("ragged rows")
        return cls(len(rows), cols, tuple(as_fraction(x) for r in rows for x in r))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> RatMatrix:
        return cls(rows, cols, (Fraction(0),) * (rows * cols))

    @classmethod
    def identity(cls, n: int) -> RatMatrix:
        return cls(n, n, tuple(Fraction(int(i == j)) for i in range(n) for j in range(n)))

    def __getitem__(self, ij: tuple[int, int]) -> Fraction:
        i, j = ij
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> tuple[Fraction, ...]:
        return self.entries[i * self.cols:(i + 1) * self.cols]

    def to_rows(self) -> list[list[Fraction]]:
        return [list(self.row(i)) for i in range(self.rows)]

    def column(self, j: int) -> tuple[Fraction, ...]:
        return tuple(self.entries[i * self.cols + j] for i in range(self.rows))

    def apply(self, v: Sequence) -> tuple[Fraction, ...]:
        if len(v) != self.cols:
            raise ValueError("dimension mismatch")
        return tuple(
            sum((a * b for a, b in zip(self.row(i), v) if a and b), Fraction(0))
            for i in range(self.rows))

    def __matmul__(self, other: RatMatrix) -> RatMatrix:
        if self.cols != other.rows:
            raise ValueError("dimension mismatch")
        out = []
        for i in range(self.rows):
            r = self.row(i)
            for j in range(other.cols):
                out.append(sum((r[k] * other[k, j] for k in range(self.cols) if r[k]),
                               Fraction(0)))
        return RatMatrix(self.rows, other.cols, tuple(out))

    def is_zero(self) -> bool:
        return not any(self.entries)

    def sparse_rows(self) -> list[SparseRow]:
        return [{j: x for j, x in enumerate(self.row(i)) if x} for i in range(self.rows)]


class SparseEchelon:
    """Incrementally maintained reduced row echelon form.

    Rows are added one at a time; after every insertion the stored rows are in
    RREF (leading 1, zeros above and below every pivot).
    """

    def __init__(self):
        self.pivot_rows: dict[int, SparseRow] = {}

    @property
    def rank(self) -> int:
        return len(self.pivot_rows)

    def reduce(self, row: SparseRow) -> SparseRow:
        """Return ``row`` reduced against the current pivots (not stored)."""
        row = dict(row)
        for p in [c for c in row if c in self.pivot_rows]:
            f = row.get(p)
            if not f:
                continue
            for c, x in self.pivot_rows[p].items():
                y = row.get(c, 0) - f * x
                if y:
                    row[c] = y
                else:
                    row.pop(c, None)
        return row

    def add(self, row: SparseRow) -> bool:
        """Insert a row; return True when it raised the rank."""
        row = self.reduce(row)
        if not row:
            return False
        lead = min(row)
        inv = 1 / row[lead]
        if inv != 1:
            row = {c: x * inv for c, x in row.items()}
        for prow in self.pivot_rows.values():
            f = prow.get(lead)
            if f:
                for c, x in row.items():
                    y = prow.get(c, 0) - f * x
                    if y:
                        prow[c] = y
                    else:
                        del prow[c]
        self.pivot_rows[lead] = row
        return True

    def pivots(self) -> list[int]:
        return sorted(self.pivot_rows)

    def kernel(self, ncols: int) -> list[SparseRow]:
        """Canonical kernel basis read off the free columns, in column order."""
        free_to_vec: dict[int, SparseRow] = {}
        for p, row in self.pivot_rows.items():
            for c, x in row.items():
                if c != p:
                    free_to_vec.setdefault(c, {c: Fraction(1)})[p] = -x
        basis = []
        for f in range(ncols):
            if f in self.pivot_rows:
                continue
            basis.append(free_to_vec.get(f, {f: Fraction(1)}))
        return basis


def sparse_rref(rows: Iterable[SparseRow]) -> SparseEchelon:
    ech = SparseEchelon()
    for r in rows:
        ech.add(r)
    return ech


def rref(m: RatMatrix) -> tuple[RatMatrix, list[int], int]:
    """Reduced row echelon form, pivot columns and rank."""
    ech = sparse_rref(m.sparse_rows())
    pivots = ech.pivots()
    out = []
    for p in pivots:
        row = ech.pivot_rows[p]
        out.append([row.get(j, Fraction(0)) for j in range(m.cols)])
    out.extend([[Fraction(0)] * m.cols for _ in range(m.rows - len(pivots))])
    return RatMatrix.from_rows(out, m.cols), pivots, len(pivots)


def rank(m: RatMatrix) -> int:
    return sparse_rref(m.sparse_rows()).rank


def densify(v: SparseRow, n: int) -> tuple[Fraction, ...]:
    return tuple(v.get(i, Fraction(0)) for i in range(n))


def sparsify(v: Sequence) -> SparseRow:
    return {i: as_fraction(x) for i, x in enumerate(v) if x}


def kernel_basis(m: RatMatrix) -> list[tuple[Fraction, ...]]:
    """Basis of ``{v : m v = 0}``, one vector per free column of the RREF."""
    ech = sparse_rref(m.sparse_rows())
    return [densify(v, m.cols) for v in ech.kernel(m.cols)]


def in_span(v: Sequence, basis: Sequence[Sequence]) -> tuple[bool, tuple[Fraction, ...] | None]:
    """Decide whether ``v`` is a combination of ``basis``; return coordinates if so.

    When ``basis`` is dependent the coordinates put zero weight on redundant
    vectors (those not selected as pivots).
    """
    n = len(v)
    for b in basis:
        if len(b) != n:
            raise ValueError("vectors must have the same length")
    k = len(basis)
    # Columns 0..k-1 hold the basis vectors, column k holds v.
    rows = []
    for i in range(n):
        row = {j: as_fraction(b[i]) for j, b in enumerate(basis) if b[i]}
        if v[i]:
            row[k] = as_fraction(v[i])
        rows.append(row)
    ech = sparse_rref(rows)
    if k in ech.pivot_rows:
        return False, None
    coords = [Fraction(0)] * k
    for p, row in ech.pivot_rows.items():
        coords[p] = row.get(k, Fraction(0))
    return True, tuple(coords)


def sparse_in_span(v: SparseRow, ech: SparseEchelon) -> bool:
    return not ech.reduce(v)
