"""The nilpotent algebra m = g_{<0}(h) of negative-weight fields, with structure constants."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .exact_linalg import SparseEchelon, SparseRow
from .vfield import (
    CapExceeded, Monomial, PolynomialVectorField, Signature, bracket_monomials, enumerate_layer,
    format_term, weight_vector_field, bracket,
)

DEFAULT_MAX_ALGEBRA_DIM = 400
DEFAULT_JACOBI_EXHAUSTIVE_DIM = 64


class BasisError(ValueError):
    pass


def fmt_rational(c: Fraction) -> str:
    return str(Fraction(c))


@dataclass(frozen=True, eq=False)
class GradedNilpotentAlgebra:
    """Basis, grading and bracket table of ``m``.

    The global basis runs from the most negative layer up to weight -1, each layer
    in canonical monomial order.  ``structure[(a, b)]`` for ``a < b`` is the sparse
    expansion ``{e: c}`` of ``[X_a, X_b]``.
    """

    sig: Signature
    layers: dict[int, tuple[Monomial, ...]]
    basis: tuple[Monomial, ...]
    structure: dict[tuple[int, int], dict[int, Fraction]]
    index: dict[Monomial, int] = field(repr=False)
    weights: tuple[int, ...] = field(repr=False)
    offsets: dict[int, int] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def layer_dim(self, k: int) -> int:
        return len(self.layers.get(k, ()))

    def layer_indices(self, k: int) -> range:
        start = self.offsets.get(k, 0)
        return range(start, start + self.layer_dim(k))

    def local_index(self, a: int) -> int:
        return a - self.offsets[self.weights[a]]

    def bracket_basis(self, a: int, b: int) -> dict[int, Fraction]:
        if a < b:
            return self.structure.get((a, b), {})
        if a > b:
            return {e: -c for e, c in self.structure.get((b, a), {}).items()}
        return {}

    def bracket_coords(self, u: dict[int, Fraction], v: dict[int, Fraction]) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for a, ca in u.items():
            for b, cb in v.items():
                for e, c in self.bracket_basis(a, b).items():
                    out[e] = out.get(e, 0) + ca * cb * c
        return {e: c for e, c in out.items() if c}

    def field_of(self, coords: dict[int, Fraction]) -> PolynomialVectorField:
        return PolynomialVectorField({self.basis[e]: c for e, c in coords.items()})

    def layer_field(self, k: int, local: Sequence[Fraction]) -> PolynomialVectorField:
        return PolynomialVectorField(dict(zip(self.layers.get(k, ()), local)))

    def to_report(self) -> dict:
        table = []
        for (a, b), out in sorted(self.structure.items()):
            for e, c in sorted(out.items()):
                table.append([a, b, e, fmt_rational(c)])
        return {
            "signature": list(self.sig.weights),
            "dim": self.dim,
            "layers": [
                {"k": k, "dim": self.layer_dim(k),
                 "basis": [format_term(m, Fraction(1)) for m in self.layers[k]]}
                for k in sorted(self.layers)
            ],
            "structure_constants": table,
        }


def build_negative_part(sig: Signature, max_dim: int = DEFAULT_MAX_ALGEBRA_DIM) -> GradedNilpotentAlgebra:
    layers = {k: tuple(enumerate_layer(sig, k)) for k in range(-sig.top_weight, 0)}
    basis = tuple(m for k in sorted(layers) for m in layers[k])
    if len(basis) > max_dim:
        raise CapExceeded("max_algebra_dim", max_dim, len(basis))
    index = {m: i for i, m in enumerate(basis)}
    weights = tuple(m.weight(sig) for m in basis)
    offsets, pos = {}, 0
    for k in sorted(layers):
        offsets[k] = pos
        pos += len(layers[k])
    structure: dict[tuple[int, int], dict[int, Fraction]] = {}
    for a in range(len(basis)):
        for b in range(a + 1, len(basis)):
            if weights[a] + weights[b] < -sig.top_weight:
                continue
            out = bracket_monomials(basis[a], basis[b])
            if not out:
                continue
            row = {}
            for m, c in out.items():
                if m not in index:
                    raise BasisError(f"bracket of {basis[a]} and {basis[b]} leaves m: {m}")
                row[index[m]] = Fraction(c)
            structure[(a, b)] = row
    return GradedNilpotentAlgebra(sig, layers, basis, structure, index, weights, offsets)


def expand_in_basis(x: PolynomialVectorField, alg: GradedNilpotentAlgebra) -> dict[int, Fraction]:
    """Coordinates of ``x`` in the global basis (sparse)."""
    out = {}
    for m, c in x.items():
        i = alg.index.get(m)
        if i is None:
            w = m.weight(alg.sig)
            why = "non-negative weight" if w >= 0 else "not a basis monomial"
            raise BasisError(f"term {format_term(m, c)} ({why}, weight {w}) is outside m")
        out[i] = c
    return out


def expand_dense(x: PolynomialVectorField, alg: GradedNilpotentAlgebra) -> tuple[Fraction, ...]:
    coords = expand_in_basis(x, alg)
    return tuple(coords.get(i, Fraction(0)) for i in range(alg.dim))


def lower_central_series(alg: GradedNilpotentAlgebra) -> tuple[list[list[SparseRow]], int]:
    """Bases of ``L^1 = m, L^{i+1} = [m, L^i]`` (ending with the first zero term) and the height."""
    current = [{i: Fraction(1)} for i in range(alg.dim)]
    series = [current]
    height = 0
    while current:
        height += 1
        ech = SparseEchelon()
        for a in range(alg.dim):
            for v in current:
                w = alg.bracket_coords({a: Fraction(1)}, v)
                if w:
                    ech.add(w)
        current = [dict(r) for _, r in sorted(ech.pivot_rows.items())]
        series.append(current)
        if height > alg.dim + 1:
            raise RuntimeError("lower central series does not terminate")
    return series, height


def transitivity_check(alg: GradedNilpotentAlgebra) -> bool:
    """Every coordinate field d_i must occur in m."""
    n = alg.sig.n
    zero = (0,) * n
    return all(Monomial(zero, i) in alg.index for i in range(n))


def jacobi_violations(alg: GradedNilpotentAlgebra,
                      exhaustive_dim: int = DEFAULT_JACOBI_EXHAUSTIVE_DIM,
                      samples: int = 20000, seed: int = 0) -> list[tuple[int, int, int]]:
    """Basis triples where the Jacobi identity fails (exhaustive up to ``exhaustive_dim``)."""
    d = alg.dim
    if d <= exhaustive_dim:
        triples = itertools.combinations(range(d), 3)
    else:
        rng = random.Random(seed)
        triples = (tuple(rng.sample(range(d), 3)) for _ in range(samples))
    bad = []
    one = Fraction(1)
    for a, b, c in triples:
        if alg.weights[a] + alg.weights[b] + alg.weights[c] < -alg.sig.top_weight:
            continue
        xa, xb, xc = {a: one}, {b: one}, {c: one}
        total: dict[int, Fraction] = {}
        for u, v, w in ((xa, xb, xc), (xb, xc, xa), (xc, xa, xb)):
            for e, x in alg.bracket_coords(u, alg.bracket_coords(v, w)).items():
                total[e] = total.get(e, 0) + x
        if any(total.values()):
            bad.append((a, b, c))
    return bad


def homogeneity_violations(alg: GradedNilpotentAlgebra) -> list[Monomial]:
    euler = weight_vector_field(alg.sig)
    out = []
    for m in alg.basis:
        x = m.field()
        if bracket(euler, x) != x * m.weight(alg.sig):
            out.append(m)
    return out
