"""Acceptance criteria.  Each test prints one ``[criterion N] PASS|FAIL`` line."""

import contextlib
import itertools
import random
import subprocess
import sys
import time
from fractions import Fraction

import pytest

from tanaka.cli import default_depth
from tanaka.derivations import ad_embedding, ad_images, classify_layer, potential_field, prolong, verify_leibniz
from tanaka.exact_linalg import SparseEchelon
from tanaka.graded_algebra import (
    build_negative_part, homogeneity_violations, jacobi_violations, lower_central_series,
    transitivity_check,
)
from tanaka.second_kind import SecondKindMatrix, confirm_theorem, construct_second_kind, predicted_ell
from tanaka.vfield import PolynomialVectorField, Signature, enumerate_layer


def sweep_signatures():
    sigs = [s for n in range(1, 4) for s in itertools.combinations_with_replacement(range(1, 6), n)]
    sigs += list(itertools.combinations_with_replacement(range(1, 4), 4))
    return [Signature(s) for s in sigs]


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number, title, budget=None):
        start = time.perf_counter()
        ok = False
        try:
            yield
            elapsed = time.perf_counter() - start
            if budget is not None:
                assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            with capsys.disabled():
                print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.2f}s)")
    return run


def names(layer):
    return {str(m) for m in layer}


def rendered_images(d, state):
    alg = state.alg
    out = {}
    for a in range(alg.dim):
        img = d.image(alg, a)
        if img:
            out[str(alg.basis[a])] = str(state.as_field(alg.weights[a] + d.weight, img))
    return out


def test_criterion_1_layer_bases_124(criterion):
    with criterion(1, "layer bases of (1,2,4)", budget=1):
        sig = Signature((1, 2, 4))
        assert names(enumerate_layer(sig, -4)) == {"d3"}
        assert names(enumerate_layer(sig, -3)) == {"x1*d3"}
        assert names(enumerate_layer(sig, -2)) == {"d2", "x1^2*d3", "x2*d3"}
        assert names(enumerate_layer(sig, -1)) == {"d1", "x1*d2", "x1*x2*d3", "x1^3*d3"}


def test_criterion_2_second_kind_124(criterion):
    with criterion(2, "second-kind derivation of (1,2,4)", budget=5):
        sig = Signature((1, 2, 4))
        state = prolong(sig, 0)
        assert len(enumerate_layer(sig, 0)) + 1 == state.layers[0].dim == 8
        cls = classify_layer(state, 0)
        assert cls.second_kind_dim == 1
        assert rendered_images(cls.representatives[0], state) == {"x2*d3": "d2", "x1*x2*d3": "x1*d2"}


def test_criterion_3_second_kind_113(criterion):
    with criterion(3, "second-kind derivations of (1,1,3)", budget=10):
        sig = Signature((1, 1, 3))
        state = prolong(sig, 1)
        A = SecondKindMatrix(sig, ((0, 1), (1, 0)))
        d = construct_second_kind(A, state)
        assert rendered_images(d, state) == {
            "x1*d3": "d2", "x2*d3": "d1", "x1^2*d3": "2*x1*d2",
            "x1*x2*d3": "x1*d1 + x2*d2", "x2^2*d3": "2*x2*d1",
        }
        assert verify_leibniz(d, state)[0]
        assert classify_layer(state, 1).second_kind_dim == 3 == 2 * 3 // 2
        assert classify_layer(state, 0).second_kind_dim == 0


def test_criterion_4_negative_case_123(criterion):
    with criterion(4, "no second kind for (1,2,3)", budget=30):
        sig = Signature((1, 2, 3))
        assert predicted_ell(sig).ell == -1
        state = prolong(sig, 3)
        assert [classify_layer(state, k).second_kind_dim for k in range(4)] == [0, 0, 0, 0]


def test_criterion_5_theorem_sweep(criterion):
    with criterion(5, "theorem sweep n<=3 r<=5 and n=4 r<=3", budget=600):
        failures = []
        for sig in sweep_signatures():
            report = confirm_theorem(sig, prolong(sig, default_depth(sig)))
            if report.status != "PASS":
                failures.append((sig.weights, report.status, report.failures))
        assert not failures, failures


def random_homogeneous(rng, sig, k):
    basis = enumerate_layer(sig, k)
    picks = rng.sample(basis, min(3, len(basis)))
    return PolynomialVectorField({m: Fraction(rng.randint(-6, 6), rng.randint(1, 5)) for m in picks})


ORACLE_SIGS = [(1, 2), (2, 3), (1, 2, 3), (1, 2, 4), (1, 1, 3), (2, 3, 4), (1, 1, 5), (1, 1, 1, 3)]


def test_criterion_6_oracle_suite(criterion):
    with criterion(6, "Leibniz, ad embedding and potential-field oracles"):
        rng = random.Random(2024)
        for weights in ORACLE_SIGS:
            sig = Signature(weights)
            state = prolong(sig, default_depth(sig))
            for layer in state.layers:
                for d in layer.maps:
                    assert verify_leibniz(d, state) == (True, None), (weights, layer.k)
                ech = SparseEchelon()
                for d in ad_embedding(state, layer.k):
                    vec = d.vector(layer.layout)
                    assert layer.combine(layer.coordinates(vec)) == vec
                    ech.add(vec)
                assert ech.rank == len(enumerate_layer(sig, layer.k))
            for _ in range(50):
                k = rng.randint(0, state.depth)
                x = random_homogeneous(rng, sig, k)
                d = state.map_from_images(k, ad_images(state, x, k))
                assert potential_field(d, state) == x


def test_criterion_7_algebra_suite(criterion):
    with criterion(7, "Jacobi, homogeneity, height and transitivity"):
        exhaustive = 0
        for sig in sweep_signatures():
            alg = build_negative_part(sig)
            if alg.dim <= 64:
                assert jacobi_violations(alg) == [], sig
                exhaustive += 1
            assert homogeneity_violations(alg) == [], sig
            assert lower_central_series(alg)[1] <= sig.top_weight
            assert transitivity_check(alg)
        assert exhaustive == len(sweep_signatures())


def test_criterion_8_determinism(criterion):
    with criterion(8, "byte-identical prolong --json"):
        def run(sig):
            cmd = [sys.executable, "-m", "tanaka", "prolong", "--sig", sig, "--json"]
            return subprocess.run(cmd, capture_output=True, check=True).stdout
        first, second, permuted = run("1,1,3"), run("1,1,3"), run("3,1,1")
        assert first == second == permuted
        assert run("1,2,4") == run("4,2,1") == run("2,4,1")
