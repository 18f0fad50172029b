"""Exact computation of Tanaka prolongations of the nilpotent algebra g_{<0}(h)
of negative-weight polynomial vector fields for a positive dilation h of R^n."""

from .derivations import (
    DerivationMap, ProlongationState, ad_embedding, classify_layer, potential_field,
    prolong, solve_layer, verify_leibniz,
)
from .exact_linalg import RatMatrix, in_span, kernel_basis, rref
from .graded_algebra import (
    GradedNilpotentAlgebra, build_negative_part, expand_in_basis, lower_central_series,
    transitivity_check,
)
from .second_kind import (
    SecondKindMatrix, TheoremReport, WrongWeightPrediction, confirm_theorem,
    construct_second_kind, predicted_ell, well_definedness_check,
)
from .vfield import (
    Monomial, PolynomialVectorField, Signature, bracket, enumerate_layer, format_field,
    multiply_by_monomial, parse_field, weight_of, weight_vector_field,
)

__version__ = "0.1.0"
