import itertools
import random
from fractions import Fraction

import pytest

from conftest import cached_state
from tanaka.derivations import (
    ClosednessError, PrerequisiteError, ProlongationState, ad_embedding, ad_images,
    classify_layer, commutator, leibniz_rows, potential_field, solve_layer, verify_leibniz,
)
from tanaka.exact_linalg import RatMatrix, SparseEchelon, kernel_basis, sparsify
from tanaka.graded_algebra import build_negative_part, expand_in_basis
from tanaka.vfield import (
    Monomial, PolynomialVectorField, Signature, bracket, enumerate_layer, parse_field,
    weight_vector_field,
)

SIGS = [(1,), (2,), (1, 2), (1, 3), (2, 2), (2, 5), (1, 2, 3), (1, 2, 4), (1, 1, 3), (2, 3, 4),
        (1, 1, 4), (1, 1, 1, 3)]
DEPTH = {(1, 1, 1, 3): 1, (1, 1, 4): 2}


def state_for(sig, depth=None):
    return cached_state(sig, DEPTH.get(sig, 2) if depth is None else depth)


def P(text, n=3):
    return parse_field(text, n)


def in_layer(layer, d):
    vec = d.vector(layer.layout)
    return layer.combine(layer.coordinates(vec)) == vec


# -- independent constraint path ---------------------------------------------------

def defect_columns(state, k):
    """Leibniz defect of each unit map, computed with polynomial brackets.

    Column u is the defect of the map whose only nonzero unknown is u.  Nothing
    here touches leibniz_rows or the structure-constant table.
    """
    alg = state.alg
    layout = state.layout(k)
    fields = [m.field() for m in alg.basis]
    bottom = -alg.sig.top_weight
    pairs = [(a, b) for a, b in itertools.combinations(range(alg.dim), 2)
             if alg.weights[a] + alg.weights[b] + k >= bottom]
    xy = {(a, b): expand_in_basis(bracket(fields[a], fields[b]), alg) for a, b in pairs}

    def as_coords(t, elem):
        # graded element of weight t -> dict keyed for comparison
        return {("f", m): c for m, c in alg.field_of(elem).items()} if t < 0 else {("u", i): c for i, c in elem.items()}

    def br(t, elem, b):
        if t < 0:
            z = bracket(alg.field_of(elem), fields[b])
            return {("f", m): c for m, c in z.items()}
        out = state.act(t, elem, b)
        return as_coords(t + alg.weights[b], out)

    cols = []
    for u in range(layout.size):
        d = state.map_from_vector(layout, {u: Fraction(1)})
        imgs = [d.image(alg, a) for a in range(alg.dim)]
        col = {}
        for a, b in pairs:
            s = alg.weights[a] + alg.weights[b] + k
            lhs = {}
            for e, c in xy[(a, b)].items():
                for o, x in imgs[e].items():
                    lhs[o] = lhs.get(o, 0) + c * x
            total = dict(as_coords(s, {o: x for o, x in lhs.items() if x}))
            for key, x in br(alg.weights[a] + k, imgs[a], b).items():
                total[key] = total.get(key, 0) - x
            for key, x in br(alg.weights[b] + k, imgs[b], a).items():
                total[key] = total.get(key, 0) + x
            for key, x in total.items():
                if x:
                    col[(a, b, key)] = x
        cols.append(col)
    return layout, cols


@pytest.mark.parametrize("sig", [(1, 2), (1, 3), (2, 2), (1, 2, 3), (1, 2, 4), (1, 1, 3)])
def test_solver_matches_polynomial_defect_oracle(sig):
    state = state_for(sig)
    for k in range(state.depth + 1):
        layout, cols = defect_columns(state, k)
        keys = sorted({key for col in cols for key in col}, key=repr)
        rows = [{u: col[key] for u, col in enumerate(cols) if key in col} for key in keys]
        dense = RatMatrix.from_rows([[r.get(u, 0) for u in range(layout.size)] for r in rows],
                                    layout.size) if rows else RatMatrix.zeros(0, layout.size)
        oracle = [sparsify(v) for v in kernel_basis(dense)]
        layer = state.layers[k]
        # same canonical RREF kernel, not just the same dimension
        assert layer.vectors == oracle


@pytest.mark.parametrize("sig", [(1, 2, 4), (1, 1, 3), (2, 3, 4)])
def test_blockwise_solve_equals_dense_solve(sig):
    state = state_for(sig)
    for k in range(state.depth + 1):
        layout = state.layers[k].layout
        rows = leibniz_rows(truncated(state, k), layout)
        dense = RatMatrix.from_rows([[r.get(u, 0) for u in range(layout.size)] for r in rows], layout.size)
        assert [sparsify(v) for v in kernel_basis(dense)] == state.layers[k].vectors


def truncated(state, k):
    s = ProlongationState(state.alg)
    for layer in state.layers[:k]:
        s.layers.append(layer)
    return s


# -- examples ----------------------------------------------------------------------

def test_solve_layer_123_weight0():
    state = state_for((1, 2, 3), 0)
    assert len(enumerate_layer(state.sig, 0)) == 6
    assert state.layers[0].dim == 6


def test_solve_layer_124_weight0():
    state = state_for((1, 2, 4), 0)
    assert len(enumerate_layer(state.sig, 0)) == 7
    assert state.layers[0].dim == 8


def test_missing_prerequisite():
    state = ProlongationState(build_negative_part(Signature((1, 2))))
    with pytest.raises(PrerequisiteError):
        solve_layer(state, 1)
    layer0 = solve_layer(state, 0)
    state.add_layer(layer0)
    with pytest.raises(PrerequisiteError):
        state.add_layer(layer0)
    with pytest.raises(PrerequisiteError):
        classify_layer(state, 2)
    with pytest.raises(ValueError):
        solve_layer(state, -1)


def test_ad_of_euler_field_is_diagonal():
    state = state_for((1, 2, 4), 0)
    euler = weight_vector_field(state.sig)
    d = state.map_from_images(0, ad_images(state, euler, 0))
    for p, m in d.blocks.items():
        assert m == RatMatrix.from_rows([[p if r == c else 0 for c in range(m.cols)] for r in range(m.rows)])


def test_ad_examples_123():
    state = state_for((1, 2, 3), 0)
    alg = state.alg
    imgs = ad_images(state, P("x1*d1"), 0)
    assert alg.field_of(imgs[alg.index[Monomial((0, 0, 0), 0)]]) == P("-d1")
    assert alg.index[Monomial((0, 0, 0), 1)] not in imgs
    # k = -1: d_x sends x d_y to d_y
    maps = ad_embedding(state, -1)
    dx = enumerate_layer(state.sig, -1).index(Monomial((0, 0, 0), 0))
    a = alg.index[Monomial((1, 0, 0), 1)]
    assert alg.field_of(maps[dx].image(alg, a)) == P("d2")


def test_classify_examples():
    state = state_for((1, 2, 3), 3)
    for k in range(4):
        assert classify_layer(state, k).second_kind_dim == 0
    state = state_for((1, 2, 4), 0)
    cls = classify_layer(state, 0)
    assert cls.second_kind_dim == 1
    alg = state.alg
    imgs = {str(alg.basis[a]): str(alg.field_of(cls.representatives[0].image(alg, a)))
            for a in range(alg.dim) if cls.representatives[0].image(alg, a)}
    assert imgs == {"x2*d3": "d2", "x1*x2*d3": "x1*d2"}
    state = state_for((1, 1, 3), 1)
    assert classify_layer(state, 1).second_kind_dim == 3
    assert classify_layer(state, 0).second_kind_dim == 0


def test_verify_leibniz_examples():
    state = state_for((1, 2, 3), 0)
    alg = state.alg
    zero = state.map_from_images(0, {})
    assert verify_leibniz(zero, state) == (True, None)
    for d in ad_embedding(state, 0) + ad_embedding(state, -2):
        assert verify_leibniz(d, state)[0]
    dx = alg.index[Monomial((0, 0, 0), 0)]
    bad = state.map_from_fields(-1, {dx: P("d2")})
    ok, pair = verify_leibniz(bad, state)
    assert not ok
    a, b = pair
    names = {str(alg.basis[a]), str(alg.basis[b])}
    assert names == {"d1", "x2*d3"}
    # direct: D[d1, x2 d3] = 0 but [D d1, x2 d3] + [d1, D(x2 d3)] = [d2, x2 d3] = d3
    assert bracket(P("d1"), P("x2*d3")).is_zero()
    assert bracket(P("d2"), P("x2*d3")) == P("d3")
    # the pair (d1, x1 d2) is consistent for this map
    assert bracket(P("d2"), P("x1*d2")).is_zero()


# -- invariants --------------------------------------------------------------------

@pytest.mark.parametrize("sig", SIGS)
def test_soundness_every_basis_element_is_a_derivation(sig):
    state = state_for(sig)
    for layer in state.layers:
        for d in layer.maps:
            assert verify_leibniz(d, state) == (True, None)


@pytest.mark.parametrize("sig", SIGS)
def test_ad_containment_and_injectivity(sig):
    state = state_for(sig)
    for layer in state.layers:
        maps = ad_embedding(state, layer.k)
        assert len(maps) == len(enumerate_layer(state.sig, layer.k))
        ech = SparseEchelon()
        for d in maps:
            assert in_layer(layer, d)
            ech.add(d.vector(layer.layout))
        assert ech.rank == len(maps) == layer.first_kind_dim


@pytest.mark.parametrize("sig", SIGS)
def test_solution_blocks_are_graded(sig):
    state = state_for(sig)
    alg = state.alg
    for layer in state.layers:
        for d in layer.maps:
            for p, m in d.blocks.items():
                assert m.cols == alg.layer_dim(p)
                assert m.rows == state.target_dim(p + layer.k)
            for a in range(alg.dim):
                t = alg.weights[a] + layer.k
                if t < 0:
                    assert alg.field_of(d.image(alg, a)).is_homogeneous(state.sig, t)


@pytest.mark.parametrize("sig", [(1, 2), (1, 2, 3), (1, 2, 4), (1, 1, 3), (2, 3, 4)])
def test_weight0_commutators_close(sig):
    state = state_for(sig, 0)
    layer = state.layers[0]
    for d1, d2 in itertools.combinations(layer.maps, 2):
        c = commutator(d1, d2)
        assert verify_leibniz(c, state)[0]
        assert in_layer(layer, c)


def random_field(rng, sig, k):
    basis = enumerate_layer(sig, k)
    terms = {m: Fraction(rng.randint(-5, 5), rng.randint(1, 4)) for m in rng.sample(basis, min(len(basis), 3))}
    return PolynomialVectorField(terms)


@pytest.mark.parametrize("sig", [(1, 2), (1, 2, 3), (1, 2, 4), (1, 1, 3), (2, 3, 4)])
def test_potential_field_round_trip(sig):
    state = state_for(sig)
    rng = random.Random(sum(sig))
    for _ in range(50):
        k = rng.randint(0, state.depth)
        x = random_field(rng, state.sig, k)
        d = state.map_from_images(k, ad_images(state, x, k))
        assert potential_field(d, state) == x


def test_potential_field_second_kind_and_sum():
    state = state_for((1, 1, 3), 1)
    cls = classify_layer(state, 1)
    for rep in cls.representatives:
        assert potential_field(rep, state).is_zero()
    x = P("x1^2*d1 - x2*x3*d3")
    assert x.is_homogeneous(state.sig, 1)
    d = state.map_from_images(1, ad_images(state, x, 1)) + cls.representatives[1]
    assert potential_field(d, state) == x
    # subtracting ad_X leaves a pure second-kind element
    rest = d - state.map_from_images(1, ad_images(state, x, 1))
    assert rest == cls.representatives[1]


def test_potential_field_closedness_violation():
    # weight-1 map on sig (1,1): d1 -> x2 d1, d2 -> 0 gives F_1 = x2, F_2 = 0: not closed
    state = state_for((1, 1), 1)
    alg = state.alg
    d = state.map_from_images(1, {alg.index[Monomial((0, 0), 0)]: state.field_coords(0, parse_field("x2*d1", 2))})
    with pytest.raises(ClosednessError):
        potential_field(d, state)
    assert not verify_leibniz(d, state)[0]


def test_render_and_serialize():
    state = state_for((1, 2, 4), 0)
    rep = classify_layer(state, 0).representatives[0]
    from tanaka.derivations import render_map
    assert render_map(rep, state) == ["x2*d3 |-> d2", "x1*x2*d3 |-> x1*d2"]
    r = rep.to_report()
    assert r["weight"] == 0
    assert all(isinstance(x, str) for b in r["blocks"] for x in b["entries"])
