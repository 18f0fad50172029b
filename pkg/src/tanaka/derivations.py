"""Tanaka prolongation layers of m as spaces of graded derivations.

Layer ``k >= 0`` consists of linear maps ``v`` sending ``g_p(h)`` (``p < 0``) into
the weight ``p + k`` part of the prolongation built so far and satisfying

    v([X, Y]) = [v(X), Y] + [X, v(Y)]

for all basis pairs.  For an abstract element ``u`` of a layer ``q >= 0`` the
bracket ``[u, Y]`` is ``u(Y)``, read from ``u``'s stored images.

Elements of the graded space are sparse coordinate dicts.  At negative weight
the keys are global basis indices of m; at weight ``q >= 0`` they are local
indices into the basis of layer ``q``.

Every monomial field has a multidegree ``alpha - e_j`` in Z^n, additive under
brackets.  The Leibniz system therefore splits into independent blocks, one per
multidegree shift, and is solved blockwise.  A block-separable system has the
same reduced row echelon form as its blocks taken together, so the kernel basis
is the canonical one of the full system.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .exact_linalg import RatMatrix, SparseEchelon, SparseRow, in_span
from .graded_algebra import (
    DEFAULT_MAX_ALGEBRA_DIM, GradedNilpotentAlgebra, build_negative_part, expand_in_basis, fmt_rational,
)
from .vfield import (
    DEFAULT_MAX_LAYER_WEIGHT, CapExceeded, Monomial, PolynomialVectorField, Signature, bracket,
    enumerate_layer, format_term,
)

Element = dict[int, Fraction]
MultiDegree = tuple[int, ...]


class PrerequisiteError(RuntimeError):
    """A layer was requested before the layers below it exist."""


class InternalInconsistency(RuntimeError):
    """An invariant that holds mathematically failed; indicates a bug."""


class ClosednessError(ValueError):
    """The values on coordinate fields do not form a closed 1-form."""


@dataclass(frozen=True)
class Block:
    source: int        # weight p of the source layer g_p(h)
    target: int        # weight p + k
    rows: int
    cols: int
    offset: int


@dataclass(frozen=True)
class Layout:
    """Ordering of the unknowns of a weight-``k`` map: blocks by source weight, each row-major."""

    k: int
    blocks: tuple[Block, ...]
    size: int

    def block(self, p: int) -> Block | None:
        for b in self.blocks:
            if b.source == p:
                return b
        return None


@dataclass(frozen=True, eq=False)
class DerivationMap:
    """A weight-``k`` linear map on m, stored as one matrix per source layer.

    ``blocks[p]`` has one column per basis element of ``g_p(h)`` and one row per
    basis element of the target space at weight ``p + k``.
    """

    weight: int
    blocks: dict[int, RatMatrix]

    def image(self, alg: GradedNilpotentAlgebra, a: int) -> Element:
        """Image of basis element ``a`` of m as a graded element."""
        p = alg.weights[a]
        m = self.blocks.get(p)
        if m is None or m.rows == 0:
            return {}
        col = alg.local_index(a)
        t = p + self.weight
        base = alg.offsets[t] if t < 0 else 0
        return {base + r: m[r, col] for r in range(m.rows) if m[r, col]}

    def vector(self, layout: Layout) -> SparseRow:
        out: SparseRow = {}
        for b in layout.blocks:
            m = self.blocks[b.source]
            for i, x in enumerate(m.entries):
                if x:
                    out[b.offset + i] = x
        return out

    def is_zero(self) -> bool:
        return all(m.is_zero() for m in self.blocks.values())

    def __eq__(self, other):
        if not isinstance(other, DerivationMap):
            return NotImplemented
        return self.weight == other.weight and self.blocks == other.blocks

    def __add__(self, other: DerivationMap) -> DerivationMap:
        if self.weight != other.weight:
            raise ValueError("weights differ")
        return DerivationMap(self.weight, {
            p: RatMatrix(m.rows, m.cols, tuple(x + y for x, y in zip(m.entries, other.blocks[p].entries)))
            for p, m in self.blocks.items()})

    def scale(self, c) -> DerivationMap:
        c = Fraction(c)
        return DerivationMap(self.weight, {
            p: RatMatrix(m.rows, m.cols, tuple(x * c for x in m.entries)) for p, m in self.blocks.items()})

    def __sub__(self, other: DerivationMap) -> DerivationMap:
        return self + other.scale(-1)

    def to_report(self) -> dict:
        return {
            "weight": self.weight,
            "blocks": [
                {"p": p, "rows": m.rows, "cols": m.cols,
                 "entries": [fmt_rational(x) for x in m.entries]}
                for p, m in sorted(self.blocks.items())
            ],
        }


@dataclass(eq=False)
class Layer:
    """Solved layer ``g_k^T`` with everything later layers need."""

    k: int
    layout: Layout
    vectors: list[SparseRow]
    free_columns: list[int]
    multidegrees: list[MultiDegree]
    maps: list[DerivationMap]
    # images[i][a]: u_i(X_a) as a graded element
    images: list[list[Element]]
    # ad coordinates of each monomial of g_k(h) in this layer's basis
    fields: tuple[Monomial, ...] = ()
    ad_coords: dict[Monomial, Element] = field(default_factory=dict)
    ad_pivots: list[int] = field(default_factory=list)
    ad_echelon: SparseEchelon | None = None

    @property
    def dim(self) -> int:
        return len(self.maps)

    @property
    def first_kind_dim(self) -> int:
        return len(self.ad_pivots)

    @property
    def second_kind_dim(self) -> int:
        return self.dim - self.first_kind_dim

    def coordinates(self, vec: SparseRow) -> Element:
        """Coordinates of a kernel vector in this layer's basis (read off the free columns)."""
        return {i: vec[f] for i, f in enumerate(self.free_columns) if vec.get(f)}

    def combine(self, coords: Element) -> SparseRow:
        out: SparseRow = {}
        for i, c in coords.items():
            for j, x in self.vectors[i].items():
                y = out.get(j, 0) + c * x
                if y:
                    out[j] = y
                else:
                    out.pop(j, None)
        return out


class ProlongationState:
    """m together with the prolongation layers ``g_0^T, g_1^T, ...`` computed so far."""

    def __init__(self, alg: GradedNilpotentAlgebra, max_layer_weight: int = DEFAULT_MAX_LAYER_WEIGHT):
        self.alg = alg
        self.layers: list[Layer] = []
        self.max_layer_weight = max_layer_weight
        self._md_m = [m.multidegree() for m in alg.basis]

    @property
    def sig(self) -> Signature:
        return self.alg.sig

    @property
    def depth(self) -> int:
        """Highest computed weight (-1 when no layer exists)."""
        return len(self.layers) - 1

    def target_dim(self, t: int) -> int:
        if t < 0:
            return self.alg.layer_dim(t)
        return self.layers[t].dim

    def key(self, t: int, r: int) -> int:
        return self.alg.offsets[t] + r if t < 0 else r

    def row_of(self, t: int, key: int) -> int:
        return key - self.alg.offsets[t] if t < 0 else key

    def multidegree(self, t: int, key: int) -> MultiDegree:
        if t < 0:
            return self._md_m[key]
        return self.layers[t].multidegrees[key]

    def act(self, t: int, elem: Element, b: int) -> Element:
        """``[elem, X_b]`` for ``elem`` of weight ``t`` and basis element ``X_b`` of m."""
        if t < 0:
            return self.alg.bracket_coords(elem, {b: Fraction(1)})
        images = self.layers[t].images
        out: Element = {}
        for i, c in elem.items():
            for e, x in images[i][b].items():
                out[e] = out.get(e, 0) + c * x
        return {e: x for e, x in out.items() if x}

    def layout(self, k: int) -> Layout:
        blocks = []
        off = 0
        for p in sorted(self.alg.layers):
            cols = self.alg.layer_dim(p)
            if not cols:
                continue
            rows = self.target_dim(p + k)
            blocks.append(Block(p, p + k, rows, cols, off))
            off += rows * cols
        return Layout(k, tuple(blocks), off)

    def field_coords(self, q: int, x: PolynomialVectorField) -> Element:
        """Coordinates of a weight-``q`` field: global m coordinates or ad coordinates in layer ``q``."""
        if q < 0:
            return expand_in_basis(x, self.alg)
        layer = self.layers[q]
        out: Element = {}
        for m, c in x.items():
            coords = layer.ad_coords.get(m)
            if coords is None:
                raise InternalInconsistency(f"{m} is not a weight-{q} field")
            for i, y in coords.items():
                out[i] = out.get(i, 0) + c * y
        return {i: y for i, y in out.items() if y}

    def as_field(self, q: int, elem: Element) -> PolynomialVectorField | None:
        """The vector field whose adjoint action is ``elem``, or None if ``elem`` is not of the first kind."""
        if q < 0:
            return self.alg.field_of(elem)
        layer = self.layers[q]
        vec = [elem.get(i, Fraction(0)) for i in range(layer.dim)]
        ok, lam = in_span(vec, [[layer.ad_coords[m].get(i, Fraction(0)) for i in range(layer.dim)]
                                for m in layer.fields])
        if not ok:
            return None
        return PolynomialVectorField(dict(zip(layer.fields, lam)))

    def add_layer(self, layer: Layer) -> None:
        if layer.k != len(self.layers):
            raise PrerequisiteError(f"layer {layer.k} inserted after {len(self.layers)} layers")
        self.layers.append(layer)
        _attach_ad(self, layer)

    def extend_to(self, depth: int) -> ProlongationState:
        while self.depth < depth:
            self.add_layer(solve_layer(self, self.depth + 1))
        return self

    def map_from_vector(self, layout: Layout, vec: SparseRow) -> DerivationMap:
        blocks = {}
        for b in layout.blocks:
            entries = tuple(vec.get(b.offset + i, Fraction(0)) for i in range(b.rows * b.cols))
            blocks[b.source] = RatMatrix(b.rows, b.cols, entries)
        return DerivationMap(layout.k, blocks)

    def map_from_images(self, k: int, images: Mapping[int, Element]) -> DerivationMap:
        """Build a weight-``k`` map from sparse images of basis elements (graded elements)."""
        layout = self.layout(k)
        vec: SparseRow = {}
        for a, img in images.items():
            p = self.alg.weights[a]
            b = layout.block(p)
            col = self.alg.local_index(a)
            for key, x in img.items():
                if x:
                    vec[b.offset + self.row_of(p + k, key) * b.cols + col] = Fraction(x)
        return self.map_from_vector(layout, vec)

    def map_from_fields(self, k: int, images: Mapping[int, PolynomialVectorField]) -> DerivationMap:
        """Like :meth:`map_from_images` with field-valued images (non-negative targets via ad)."""
        return self.map_from_images(k, {
            a: self.field_coords(self.alg.weights[a] + k, x) for a, x in images.items()})

    def element_images(self, d: DerivationMap) -> list[Element]:
        return [d.image(self.alg, a) for a in range(self.alg.dim)]


def _unknown_index(block: Block, r: int, col: int) -> int:
    return block.offset + r * block.cols + col


def leibniz_rows(state: ProlongationState, layout: Layout) -> list[SparseRow]:
    """Constraint rows ``v[X_a,X_b] - [v X_a, X_b] - [X_a, v X_b] = 0`` over pairs ``a < b``."""
    alg = state.alg
    k = layout.k
    block_of = {b.source: b for b in layout.blocks}
    bottom = -alg.sig.top_weight
    act_cache: dict[tuple[int, int, int], Element] = {}

    def act_unit(t, r, b):
        key = (t, r, b)
        got = act_cache.get(key)
        if got is None:
            got = state.act(t, {state.key(t, r): Fraction(1)}, b)
            act_cache[key] = got
        return got

    rows: list[SparseRow] = []
    d = alg.dim
    for a in range(d):
        pa = alg.weights[a]
        ba = block_of[pa]
        ca = alg.local_index(a)
        for b in range(a + 1, d):
            pb = alg.weights[b]
            s = pa + pb + k
            if s < bottom:
                continue
            bb = block_of[pb]
            cb = alg.local_index(b)
            eq: dict[int, SparseRow] = defaultdict(dict)

            def add(out_key, unk, coeff):
                row = eq[out_key]
                y = row.get(unk, 0) + coeff
                if y:
                    row[unk] = y
                else:
                    row.pop(unk, None)

            for e, c in alg.bracket_basis(a, b).items():
                be = block_of[alg.weights[e]]
                ce = alg.local_index(e)
                for r in range(be.rows):
                    add(state.key(s, r), _unknown_index(be, r, ce), c)
            for r in range(ba.rows):
                for o, c in act_unit(pa + k, r, b).items():
                    add(o, _unknown_index(ba, r, ca), -c)
            for r in range(bb.rows):
                for o, c in act_unit(pb + k, r, a).items():
                    add(o, _unknown_index(bb, r, cb), c)
            rows.extend(row for row in eq.values() if row)
    return rows


def solve_layer(state: ProlongationState, k: int) -> Layer:
    """Solve for ``g_k^T``; requires layers ``0..k-1`` in ``state``."""
    if k < 0:
        raise ValueError("prolongation layers have weight k >= 0")
    if state.depth < k - 1:
        raise PrerequisiteError(f"layer {k} needs layers 0..{k - 1}; have up to {state.depth}")
    if k > state.max_layer_weight:
        raise CapExceeded("max_layer_weight", state.max_layer_weight, k)
    layout = state.layout(k)

    # multidegree shift of every unknown
    shift_of: list[MultiDegree] = [()] * layout.size
    for blk in layout.blocks:
        src = list(state.alg.layer_indices(blk.source))
        for r in range(blk.rows):
            mt = state.multidegree(blk.target, state.key(blk.target, r))
            for col, a in enumerate(src):
                ms = state._md_m[a]
                shift_of[_unknown_index(blk, r, col)] = tuple(x - y for x, y in zip(mt, ms))

    groups: dict[MultiDegree, list[int]] = defaultdict(list)
    for u, sh in enumerate(shift_of):
        groups[sh].append(u)
    echelons: dict[MultiDegree, SparseEchelon] = {sh: SparseEchelon() for sh in groups}
    for row in leibniz_rows(state, layout):
        sh = shift_of[next(iter(row))]
        echelons[sh].add(row)

    kernel: list[tuple[int, SparseRow, MultiDegree]] = []
    for sh, cols in groups.items():
        ech = echelons[sh]
        free_vecs: dict[int, SparseRow] = {}
        for p, row in ech.pivot_rows.items():
            for c, x in row.items():
                if c != p:
                    free_vecs.setdefault(c, {c: Fraction(1)})[p] = -x
        for c in cols:
            if c not in ech.pivot_rows:
                kernel.append((c, free_vecs.get(c, {c: Fraction(1)}), sh))
    kernel.sort(key=lambda t: t[0])

    vectors = [v for _, v, _ in kernel]
    maps = [state.map_from_vector(layout, v) for v in vectors]
    images = [state.element_images(m) for m in maps]
    return Layer(k, layout, vectors, [c for c, _, _ in kernel], [sh for _, _, sh in kernel], maps, images)


def ad_images(state: ProlongationState, x: PolynomialVectorField, k: int) -> dict[int, Element]:
    """``Y -> [X, Y]`` on the basis of m for a weight-``k`` field ``X``, as graded elements."""
    alg = state.alg
    out = {}
    for a, m in enumerate(alg.basis):
        y = bracket(x, m.field())
        if y:
            out[a] = state.field_coords(alg.weights[a] + k, y)
    return out


def ad_embedding(state: ProlongationState, k: int) -> list[DerivationMap]:
    """Adjoint maps of the basis of ``g_k(h)``; targets of weight >= 0 need layers below ``k``."""
    if k < -state.sig.top_weight:
        return []
    out = []
    for m in enumerate_layer(state.sig, k, state.max_layer_weight):
        out.append(state.map_from_images(k, ad_images(state, m.field(), k)))
    return out


def _attach_ad(state: ProlongationState, layer: Layer) -> None:
    """Express every ad map of ``g_k(h)`` in the layer basis and classify."""
    k = layer.k
    fields = tuple(enumerate_layer(state.sig, k, state.max_layer_weight))
    ech = SparseEchelon()
    for m, d in zip(fields, ad_embedding(state, k)):
        vec = d.vector(layer.layout)
        coords = layer.coordinates(vec)
        if layer.combine(coords) != vec:
            raise InternalInconsistency(f"ad({m}) is not in the solved layer {k}")
        layer.ad_coords[m] = coords
        ech.add(coords)
    layer.fields = fields
    layer.ad_echelon = ech
    layer.ad_pivots = ech.pivots()
    if len(layer.ad_pivots) != len(fields):
        raise InternalInconsistency(f"ad embedding of g_{k}(h) is not injective")


@dataclass(frozen=True)
class Classification:
    k: int
    dim: int
    first_kind_dim: int
    second_kind_dim: int
    representatives: tuple[DerivationMap, ...]
    representative_indices: tuple[int, ...]


def classify_layer(state: ProlongationState, k: int) -> Classification:
    """Split ``g_k^T`` into the ad image of ``g_k(h)`` and a canonical complement.

    The complement consists of the layer basis elements at non-pivot columns of
    the reduced ad-coordinate matrix.
    """
    if k < 0 or k > state.depth:
        raise PrerequisiteError(f"layer {k} not solved")
    layer = state.layers[k]
    pivots = set(layer.ad_pivots)
    idx = tuple(i for i in range(layer.dim) if i not in pivots)
    return Classification(k, layer.dim, layer.first_kind_dim, layer.second_kind_dim,
                          tuple(layer.maps[i] for i in idx), idx)


def verify_leibniz(d: DerivationMap, state: ProlongationState) -> tuple[bool, tuple[int, int] | None]:
    """Check the Leibniz rule on every basis pair using polynomial brackets.

    This does not touch the solver's constraint rows: m-brackets are recomputed
    from the fields, and only brackets with abstract layer elements go through the
    stored images.  Returns ``(ok, first failing pair)``.
    """
    alg = state.alg
    k = d.weight
    bottom = -alg.sig.top_weight
    imgs = [d.image(alg, a) for a in range(alg.dim)]
    fields = [m.field() for m in alg.basis]

    def bracket_with(t, elem, y_field, b):
        # [elem, Y] with elem of weight t; a field whenever the result has negative weight
        if t < 0:
            return bracket(alg.field_of(elem), y_field)
        out = state.act(t, elem, b)
        return alg.field_of(out) if t + alg.weights[b] < 0 else out

    for a in range(alg.dim):
        for b in range(a + 1, alg.dim):
            pa, pb = alg.weights[a], alg.weights[b]
            s = pa + pb + k
            if s < bottom:
                continue
            xy = bracket(fields[a], fields[b])
            lhs: Element = {}
            for e, c in expand_in_basis(xy, alg).items():
                for o, x in imgs[e].items():
                    lhs[o] = lhs.get(o, 0) + c * x
            lhs = {o: x for o, x in lhs.items() if x}
            r1 = bracket_with(pa + k, imgs[a], fields[b], b)
            r2 = bracket_with(pb + k, imgs[b], fields[a], a)
            if s < 0:
                ok = alg.field_of(lhs) == r1 - r2
            else:
                rhs = dict(r1)
                for o, x in r2.items():
                    rhs[o] = rhs.get(o, 0) - x
                ok = lhs == {o: x for o, x in rhs.items() if x}
            if not ok:
                return False, (a, b)
    return True, None


def potential_field(d: DerivationMap, state: ProlongationState) -> PolynomialVectorField:
    """Vector field ``Z`` of weight ``k`` with ``D(d_u) = [Z, d_u]`` for every coordinate ``u``.

    With ``D(d_u) = F_u^w d_w`` the 1-forms ``F_u^w dx_u`` must be closed; their
    polynomial primitives ``F^w`` give ``Z = -F^w d_w``.
    """
    alg = state.alg
    sig = alg.sig
    n = sig.n
    k = d.weight
    if k < 0:
        raise ValueError("potential_field needs a weight k >= 0 map")
    zero = (0,) * n
    # F[u][w] = polynomial {alpha: coeff}
    F: list[dict[int, dict[tuple[int, ...], Fraction]]] = []
    for u in range(n):
        a = alg.index[Monomial(zero, u)]
        t = k - sig.weights[u]
        elem = d.image(alg, a)
        x = alg.field_of(elem) if t < 0 else state.as_field(t, elem)
        if x is None:
            raise ClosednessError(
                f"D(d{u + 1}) has a component that is not a vector field (weight {t})")
        comp: dict[int, dict] = defaultdict(dict)
        for m, c in x.items():
            comp[m.j][m.alpha] = c
        F.append(comp)

    def deriv(poly, i):
        out = {}
        for al, c in poly.items():
            if al[i]:
                b = list(al)
                b[i] -= 1
                out[tuple(b)] = c * al[i]
        return out

    for w in range(n):
        for u in range(n):
            for s in range(u + 1, n):
                if deriv(F[s].get(w, {}), u) != deriv(F[u].get(w, {}), s):
                    raise ClosednessError(
                        f"d F_{s + 1}^{w + 1}/dx{u + 1} != d F_{u + 1}^{w + 1}/dx{s + 1}")

    terms: dict[Monomial, Fraction] = {}
    for u in range(n):
        for w, poly in F[u].items():
            for al, c in poly.items():
                b = list(al)
                b[u] += 1
                key = Monomial(tuple(b), w)
                # radial homotopy: x_u x^al / (deg + 1)
                terms[key] = terms.get(key, 0) - c / (sum(al) + 1)
    return PolynomialVectorField(terms)


def commutator(d1: DerivationMap, d2: DerivationMap) -> DerivationMap:
    """``d1 d2 - d2 d1`` for weight-0 maps (m -> m)."""
    if d1.weight or d2.weight:
        raise ValueError("composition is only defined here for weight-0 maps")
    return DerivationMap(0, {p: _sub(d1.blocks[p] @ d2.blocks[p], d2.blocks[p] @ d1.blocks[p])
                             for p in d1.blocks})


def _sub(a: RatMatrix, b: RatMatrix) -> RatMatrix:
    return RatMatrix(a.rows, a.cols, tuple(x - y for x, y in zip(a.entries, b.entries)))


def prolong(sig: Signature | Iterable[int], depth: int,
            max_layer_weight: int = DEFAULT_MAX_LAYER_WEIGHT,
            max_dim: int | None = None) -> ProlongationState:
    """Build m for ``sig`` and its prolongation layers ``0..depth``."""
    if not isinstance(sig, Signature):
        sig = Signature.from_input(sig)
    alg = build_negative_part(sig, max_dim or DEFAULT_MAX_ALGEBRA_DIM)
    return ProlongationState(alg, max_layer_weight).extend_to(depth)


def render_map(d: DerivationMap, state: ProlongationState) -> list[str]:
    """Human-readable ``basis_field |-> image`` lines (nonzero images only)."""
    alg = state.alg
    lines = []
    for a, m in enumerate(alg.basis):
        img = d.image(alg, a)
        if not img:
            continue
        t = alg.weights[a] + d.weight
        if t < 0:
            rhs = str(alg.field_of(img))
        else:
            x = state.as_field(t, img)
            rhs = str(x) if x is not None else "abstract(" + ", ".join(
                f"{fmt_rational(c)}*g{t}[{i}]" for i, c in sorted(img.items())) + ")"
        lines.append(f"{format_term(m, Fraction(1))} |-> {rhs}")
    return lines
