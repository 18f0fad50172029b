"""Derivations that do not come from vector fields.

When ``l = r_n - 2 r_{n-1} >= 0`` every symmetric matrix ``A`` supported on the
coordinates of weight ``r_{n-1}`` yields a weight-``l`` derivation ``D^A`` that
kills all constant fields, sends ``x_i d_n`` to ``sum_k a_i^k d_k`` and is
extended to higher-degree fields by the product rule in the coefficient

    D(f g d_j) = f D(g d_j) + g D(f d_j).

:func:`confirm_theorem` compares solver output with this picture.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .derivations import (
    ClosednessError, DerivationMap, ProlongationState, ad_images, classify_layer,
    potential_field, render_map, verify_leibniz,
)
from .exact_linalg import as_fraction
from .graded_algebra import GradedNilpotentAlgebra, fmt_rational
from .vfield import (
    Alpha, Monomial, PolynomialVectorField, Signature, multiply_by_monomial,
    unit_alpha,
)


class NotApplicable(ValueError):
    pass


@dataclass(frozen=True)
class WrongWeightPrediction:
    ell: int
    multiplicity: int

    @property
    def has_wrong_weight(self) -> bool:
        return self.ell >= 0

    @property
    def predicted_second_kind_dim(self) -> int:
        m = self.multiplicity
        return m * (m + 1) // 2 if self.ell >= 0 else 0


def predicted_ell(sig: Signature) -> WrongWeightPrediction:
    if sig.n < 2:
        raise NotApplicable("the first wrong weight needs n >= 2")
    r = sig.weights
    ell = r[-1] - 2 * r[-2]
    mult = sum(1 for x in r[:-1] if x == r[-2])
    return WrongWeightPrediction(ell, mult)


def support(sig: Signature) -> list[int]:
    """0-based coordinates ``i < n-1`` with ``r_i = r_{n-1}``."""
    return [i for i in range(sig.n - 1) if sig.weights[i] == sig.weights[-2]]


@dataclass(frozen=True)
class SecondKindMatrix:
    """Symmetric ``(n-1) x (n-1)`` matrix supported on the weight ``r_{n-1}`` coordinates."""

    sig: Signature
    entries: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        size = self.sig.n - 1
        rows = tuple(tuple(as_fraction(x) for x in row) for row in self.entries)
        if len(rows) != size or any(len(r) != size for r in rows):
            raise ValueError(f"A must be {size}x{size}")
        object.__setattr__(self, "entries", rows)
        sup = set(support(self.sig))
        for i in range(size):
            for j in range(size):
                if rows[i][j] != rows[j][i]:
                    raise ValueError(f"A is not symmetric at ({i + 1},{j + 1})")
                if rows[i][j] and (i not in sup or j not in sup):
                    raise ValueError(
                        f"A[{i + 1},{j + 1}] = {rows[i][j]} outside the weight-{self.sig.weights[-2]} support")

    @classmethod
    def from_support_values(cls, sig: Signature, values: dict[tuple[int, int], object]) -> SecondKindMatrix:
        """Build from ``{(i, j): a}`` on 0-based indices; the transpose entries are filled in."""
        size = sig.n - 1
        a = [[Fraction(0)] * size for _ in range(size)]
        for (i, j), x in values.items():
            a[i][j] = a[j][i] = as_fraction(x)
        return cls(sig, tuple(map(tuple, a)))

    def __getitem__(self, ij):
        return self.entries[ij[0]][ij[1]]

    def __add__(self, other):
        return SecondKindMatrix(self.sig, tuple(
            tuple(x + y for x, y in zip(r, s)) for r, s in zip(self.entries, other.entries)))

    def scale(self, c):
        c = as_fraction(c)
        return SecondKindMatrix(self.sig, tuple(tuple(x * c for x in r) for r in self.entries))

    def is_zero(self) -> bool:
        return not any(x for r in self.entries for x in r)


def basis_matrices(sig: Signature) -> list[SecondKindMatrix]:
    """``E_ii`` and ``E_ij + E_ji`` (``i < j``) over the support."""
    sup = support(sig)
    return [SecondKindMatrix.from_support_values(sig, {(i, j): 1})
            for i, j in itertools.combinations_with_replacement(sup, 2)]


def _linear_value(A: SecondKindMatrix, i: int, j: int) -> PolynomialVectorField:
    n = A.sig.n
    if j != n - 1 or i == n - 1:
        return PolynomialVectorField()
    zero = (0,) * n
    return PolynomialVectorField({Monomial(zero, k): A[i, k] for k in range(n - 1) if A[i, k]})


def extend(A: SecondKindMatrix, alpha: Alpha, j: int, first: int | None = None,
           _memo: dict | None = None) -> PolynomialVectorField:
    """``D^A(x^alpha d_j)`` by the product rule, factoring out ``x_first``
    (default: the smallest index present), then always the smallest index."""
    n = A.sig.n
    deg = sum(alpha)
    if deg == 0:
        return PolynomialVectorField()
    if deg == 1:
        return _linear_value(A, alpha.index(1), j)
    memo = _memo if _memo is not None else {}
    if first is None:
        key = (alpha, j)
        if key in memo:
            return memo[key]
        i = next(k for k, a in enumerate(alpha) if a)
    else:
        if not alpha[first]:
            raise ValueError(f"x{first + 1} does not divide the coefficient")
        i = first
    rest = tuple(a - (k == i) for k, a in enumerate(alpha))
    ei = unit_alpha(n, i)
    out = (multiply_by_monomial(ei, extend(A, rest, j, _memo=memo))
           + multiply_by_monomial(rest, _linear_value(A, i, j)))
    if first is None:
        memo[(alpha, j)] = out
    return out


def second_kind_images(A: SecondKindMatrix, alg: GradedNilpotentAlgebra) -> dict[int, PolynomialVectorField]:
    """Nonzero values of ``D^A`` on the basis of m, as vector fields."""
    memo: dict = {}
    out = {}
    for a, m in enumerate(alg.basis):
        x = extend(A, m.alpha, m.j, _memo=memo)
        if x:
            out[a] = x
    return out


def construct_second_kind(A: SecondKindMatrix, state: ProlongationState) -> DerivationMap:
    """``D^A`` as a weight-``l`` map on m.

    Images of non-negative weight are vector fields of weight below ``l`` and are
    stored through their adjoint coordinates, so ``state`` must hold layers up to
    ``l - 1``.
    """
    pred = predicted_ell(A.sig)
    if pred.ell < 0:
        raise NotApplicable(f"no second-kind derivations: r_n - 2 r_(n-1) = {pred.ell} < 0")
    if A.sig != state.sig:
        raise ValueError("signature mismatch")
    if A.sig.weights[-2] == A.sig.weights[-1]:
        raise AssertionError("top weight must be attained by a single coordinate")
    images = second_kind_images(A, state.alg)
    for a, x in images.items():
        w = state.alg.weights[a] + pred.ell
        if not x.is_homogeneous(state.sig, w):
            raise AssertionError(f"D^A({state.alg.basis[a]}) = {x} is not of weight {w}")
    return state.map_from_fields(pred.ell, images)


def well_definedness_check(A: SecondKindMatrix, alg: GradedNilpotentAlgebra) -> bool:
    """Every way of factoring out the first variable gives the same value on every basis field."""
    memo: dict = {}
    for m in alg.basis:
        present = [i for i, a in enumerate(m.alpha) if a]
        if sum(m.alpha) < 2 or len(present) < 2:
            continue
        values = {extend(A, m.alpha, m.j, first=i, _memo=memo) for i in present}
        if len(values) != 1:
            return False
    return True


@dataclass
class LayerRow:
    k: int
    dim_g: int
    dim_gT: int
    second_kind: int
    predicted: int | None

    def to_report(self) -> dict:
        return {"k": self.k, "dim_g": self.dim_g, "dim_gT": self.dim_gT,
                "second_kind": self.second_kind, "predicted": self.predicted}


@dataclass
class TheoremReport:
    signature: tuple[int, ...]
    ell: int | None
    multiplicity: int | None
    rows: list[LayerRow]
    status: str                       # PASS | FAIL | N/A
    failures: list[str] = field(default_factory=list)
    witnesses: list[list[str]] = field(default_factory=list)
    recovered: list[dict] = field(default_factory=list)

    @property
    def observed_first_wrong_weight(self) -> int | None:
        for row in self.rows:
            if row.second_kind:
                return row.k
        return None

    def to_report(self) -> dict:
        return {
            "signature": list(self.signature),
            "ell": self.ell,
            "multiplicity": self.multiplicity,
            "layers": [r.to_report() for r in self.rows],
            "theorem": self.status,
            "failures": list(self.failures),
            "witnesses": [list(w) for w in self.witnesses],
        }


def _read_matrix(rep: DerivationMap, state: ProlongationState) -> tuple[SecondKindMatrix | None, str | None]:
    """Split off the vector-field part of ``rep`` and read ``A`` from ``x_i d_n``."""
    alg = state.alg
    sig = state.sig
    n = sig.n
    try:
        z = potential_field(rep, state)
    except ClosednessError as exc:
        return None, f"potential field failed: {exc}"
    rest = rep - state.map_from_images(rep.weight, ad_images(state, z, rep.weight)) if z else rep
    values: dict[tuple[int, int], Fraction] = {}
    for i in range(n - 1):
        m = Monomial(unit_alpha(n, i), n - 1)
        a = alg.index.get(m)
        if a is None:
            continue
        img = alg.field_of(rest.image(alg, a))
        for t, c in img.items():
            if sum(t.alpha) != 0:
                return None, f"value on {m} is not a constant field: {img}"
            values[(i, t.j)] = c
    size = n - 1
    entries = tuple(tuple(values.get((i, j), Fraction(0)) for j in range(size)) for i in range(size))
    try:
        return SecondKindMatrix(sig, entries), None
    except ValueError as exc:
        return None, f"matrix read off the representative is not admissible: {exc}"


def confirm_theorem(sig: Signature, state: ProlongationState) -> TheoremReport:
    """Check the first-wrong-weight statement against the solved layers in ``state``.

    (a) no second-kind part below ``l``; (b) at ``l >= 0`` the second-kind part
    has dimension ``m(m+1)/2`` and each representative is some ``D^A`` modulo
    the ad image; (c) when ``l < 0`` (or ``n = 1``) no second-kind part at any
    computed weight.
    """
    if state.sig != sig:
        raise ValueError("state was built for a different signature")
    pred = predicted_ell(sig) if sig.n >= 2 else None
    ell = pred.ell if pred else None
    rows = []
    for layer in state.layers:
        k = layer.k
        if pred is None or ell < 0 or k < ell:
            expected = 0
        elif k == ell:
            expected = pred.predicted_second_kind_dim
        else:
            expected = None
        rows.append(LayerRow(k, len(layer.fields), layer.dim, layer.second_kind_dim, expected))

    report = TheoremReport(sig.weights, ell, pred.multiplicity if pred else None, rows, "PASS")
    for row in rows:
        if row.predicted is not None and row.second_kind != row.predicted:
            report.failures.append(
                f"weight {row.k}: second-kind dimension {row.second_kind}, predicted {row.predicted}")
            cls = classify_layer(state, row.k)
            report.witnesses.extend(render_map(d, state) for d in cls.representatives)

    if ell is not None and ell >= 0:
        if state.depth < ell:
            report.status = "N/A"
            report.failures.append(f"prolongation computed to {state.depth}, need {ell}")
            return report
        if sig.weights[-2] == sig.weights[-1]:
            report.failures.append("several coordinates share the top weight")
        layer = state.layers[ell]
        for A in basis_matrices(sig):
            d = construct_second_kind(A, state)
            ok, pair = verify_leibniz(d, state)
            if not ok:
                report.failures.append(f"D^A for A={_fmt_matrix(A)} fails Leibniz at {pair}")
            vec = d.vector(layer.layout)
            if layer.combine(layer.coordinates(vec)) != vec:
                report.failures.append(f"D^A for A={_fmt_matrix(A)} is not in the solved layer")
        for rep in classify_layer(state, ell).representatives:
            A, problem = _read_matrix(rep, state)
            if problem:
                report.failures.append(problem)
                report.witnesses.append(render_map(rep, state))
                continue
            diff = rep - construct_second_kind(A, state)
            coords = layer.coordinates(diff.vector(layer.layout))
            if layer.ad_echelon.reduce(coords):
                report.failures.append(f"representative minus D^A (A={_fmt_matrix(A)}) is not a vector field")
                report.witnesses.append(render_map(rep, state))
            else:
                report.recovered.append({"A": _fmt_matrix(A), "map": render_map(rep, state)})
    if report.failures:
        report.status = "FAIL"
    return report


def _fmt_matrix(A: SecondKindMatrix) -> list[list[str]]:
    return [[fmt_rational(x) for x in r] for r in A.entries]
