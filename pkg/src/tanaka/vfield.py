"""Polynomial vector fields on R^n graded by a positive dilation.

A dilation is described by its signature, the sorted list of positive integer
weights ``r_1 <= ... <= r_n`` of the coordinates.  The monomial field
``x^alpha d_j`` has weight ``sum_i r_i alpha_i - r_j``.

Coordinates are 0-based in Python (``j`` in ``range(n)``); the text grammar
used by the CLI is 1-based (``x1``, ``d1``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, NamedTuple

from .exact_linalg import as_fraction

DEFAULT_MAX_LAYER_WEIGHT = 8


class CapExceeded(ValueError):
    """A configured size cap was hit; ``cap`` names it."""

    def __init__(self, cap: str, limit: int, requested: int):
        self.cap = cap
        self.limit = limit
        self.requested = requested
        super().__init__(f"{cap} exceeded: requested {requested}, limit {limit}")


@dataclass(frozen=True)
class Signature:
    weights: tuple[int, ...]
    # input position of each sorted coordinate (identity when input was sorted)
    permutation: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        w = tuple(int(r) for r in self.weights)
        if not w:
            raise ValueError("signature must be nonempty")
        bad = [r for r in w if r < 1]
        if bad:
            raise ValueError(f"signature weights must be positive integers, got {bad[0]}")
        if any(a > b for a, b in zip(w, w[1:])):
            raise ValueError("signature must be sorted non-decreasing; use Signature.from_input")
        object.__setattr__(self, "weights", w)
        if not self.permutation:
            object.__setattr__(self, "permutation", tuple(range(len(w))))

    @classmethod
    def from_input(cls, weights: Iterable[int]) -> Signature:
        """Sort user-supplied weights and remember where each came from."""
        w = [int(r) for r in weights]
        order = sorted(range(len(w)), key=lambda i: (w[i], i))
        return cls(tuple(w[i] for i in order), tuple(order))

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def top_weight(self) -> int:
        return self.weights[-1]

    def __iter__(self):
        return iter(self.weights)

    def __getitem__(self, i):
        return self.weights[i]

    def __str__(self):
        return ",".join(map(str, self.weights))


Alpha = tuple[int, ...]


def function_weight(alpha: Alpha, sig: Signature) -> int:
    return sum(r * a for r, a in zip(sig.weights, alpha))


def weight_of(alpha: Alpha, j: int, sig: Signature) -> int:
    """Weight of ``x^alpha d_j``; ``j`` is 0-based."""
    if not 0 <= j < sig.n:
        raise IndexError(f"coordinate index {j} out of range for n={sig.n}")
    if len(alpha) != sig.n:
        raise ValueError("multi-index length does not match signature")
    return function_weight(alpha, sig) - sig.weights[j]


def multidegree(alpha: Alpha, j: int) -> tuple[int, ...]:
    """Z^n-degree ``alpha - e_j``; brackets are additive in it."""
    return tuple(a - (i == j) for i, a in enumerate(alpha))


class Monomial(NamedTuple):
    """The monomial vector field ``x^alpha d_j``."""

    alpha: Alpha
    j: int

    def weight(self, sig: Signature) -> int:
        return weight_of(self.alpha, self.j, sig)

    @property
    def degree(self) -> int:
        return sum(self.alpha)

    def multidegree(self) -> tuple[int, ...]:
        return multidegree(self.alpha, self.j)

    def field(self) -> PolynomialVectorField:
        return PolynomialVectorField({self: Fraction(1)})

    def __str__(self):
        return format_term(self, Fraction(1))


def canonical_key(m: Monomial):
    # target index ascending, then graded-lex with higher degree / larger leading exponent first
    return (m.j, -sum(m.alpha), tuple(-a for a in m.alpha))


class PolynomialVectorField:
    """Finite rational combination of monomial fields; zero coefficients are never stored.

    Instances are treated as immutable.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, object] | None = None):
        t = {}
        if terms:
            for m, c in terms.items():
                c = as_fraction(c)
                if c:
                    t[Monomial(tuple(m[0]), int(m[1]))] = c
        self._terms = dict(sorted(t.items(), key=lambda kv: canonical_key(kv[0])))
        self._hash = None

    @classmethod
    def zero(cls) -> PolynomialVectorField:
        return cls()

    @classmethod
    def _raw(cls, terms: dict) -> PolynomialVectorField:
        obj = cls.__new__(cls)
        obj._terms = dict(sorted(((m, c) for m, c in terms.items() if c),
                                 key=lambda kv: canonical_key(kv[0])))
        obj._hash = None
        return obj

    def items(self):
        return self._terms.items()

    def monomials(self):
        return self._terms.keys()

    def coefficient(self, m: Monomial) -> Fraction:
        return self._terms.get(m, Fraction(0))

    def __len__(self):
        return len(self._terms)

    def __iter__(self) -> Iterator[Monomial]:
        return iter(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __eq__(self, other):
        if isinstance(other, PolynomialVectorField):
            return self._terms == other._terms
        if other == 0:
            return not self._terms
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    def __add__(self, other: PolynomialVectorField) -> PolynomialVectorField:
        if not isinstance(other, PolynomialVectorField):
            if other == 0:
                return self
            return NotImplemented
        t = dict(self._terms)
        for m, c in other._terms.items():
            t[m] = t.get(m, 0) + c
        return PolynomialVectorField._raw(t)

    __radd__ = __add__

    def __neg__(self):
        return PolynomialVectorField._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        s = as_fraction(scalar)
        if not s:
            return PolynomialVectorField()
        return PolynomialVectorField._raw({m: c * s for m, c in self._terms.items()})

    __rmul__ = __mul__

    def weights(self, sig: Signature) -> set[int]:
        return {m.weight(sig) for m in self._terms}

    def is_homogeneous(self, sig: Signature, k: int) -> bool:
        return all(m.weight(sig) == k for m in self._terms)

    def __str__(self):
        return format_field(self)

    def __repr__(self):
        return f"PolynomialVectorField({format_field(self)!r})"


def monomial_field(alpha: Alpha, j: int, coeff=1) -> PolynomialVectorField:
    return PolynomialVectorField({Monomial(tuple(alpha), j): coeff})


def unit_alpha(n: int, i: int | None = None) -> Alpha:
    return tuple(int(k == i) for k in range(n))


def weight_vector_field(sig: Signature) -> PolynomialVectorField:
    """The Euler-type field ``sum_i r_i x_i d_i``."""
    n = sig.n
    return PolynomialVectorField({Monomial(unit_alpha(n, i), i): r for i, r in enumerate(sig.weights)})


def bracket_monomials(a: Monomial, b: Monomial) -> dict[Monomial, int]:
    """``[x^a d_j, x^b d_k] = b_j x^(a+b-e_j) d_k - a_k x^(a+b-e_k) d_j``."""
    alpha, j = a
    beta, k = b
    out: dict[Monomial, int] = {}
    if beta[j]:
        g = list(map(sum, zip(alpha, beta)))
        g[j] -= 1
        out[Monomial(tuple(g), k)] = beta[j]
    if alpha[k]:
        g = list(map(sum, zip(alpha, beta)))
        g[k] -= 1
        key = Monomial(tuple(g), j)
        c = out.get(key, 0) - alpha[k]
        if c:
            out[key] = c
        else:
            out.pop(key, None)
    return out


def bracket(x: PolynomialVectorField, y: PolynomialVectorField) -> PolynomialVectorField:
    """Lie bracket of polynomial vector fields, ``[f d_j, g d_k] = f g_j d_k - g f_k d_j``."""
    t: dict[Monomial, Fraction] = {}
    for a, ca in x.items():
        for b, cb in y.items():
            for m, c in bracket_monomials(a, b).items():
                t[m] = t.get(m, 0) + ca * cb * c
    return PolynomialVectorField._raw(t)


def multiply_by_monomial(beta: Alpha, x: PolynomialVectorField) -> PolynomialVectorField:
    """Multiply every coefficient function of ``x`` by ``x^beta``."""
    beta = tuple(beta)
    return PolynomialVectorField._raw(
        {Monomial(tuple(a + b for a, b in zip(m.alpha, beta)), m.j): c for m, c in x.items()})


def apply_to_function(x: PolynomialVectorField, poly: Mapping[Alpha, Fraction]) -> dict[Alpha, Fraction]:
    """Derivative of a polynomial (``{alpha: coeff}``) along ``x``."""
    out: dict[Alpha, Fraction] = {}
    for m, c in x.items():
        for a, p in poly.items():
            if a[m.j]:
                g = list(map(sum, zip(m.alpha, a)))
                g[m.j] -= 1
                g = tuple(g)
                out[g] = out.get(g, 0) + c * p * a[m.j]
    return {a: c for a, c in out.items() if c}


def exponent_vectors(sig: Signature, target: int) -> Iterator[Alpha]:
    """All alpha >= 0 with ``sum r_i alpha_i == target``."""
    w = sig.weights
    n = len(w)

    def rec(i, remaining, prefix):
        if i == n - 1:
            if remaining % w[i] == 0:
                yield prefix + (remaining // w[i],)
            return
        for a in range(remaining // w[i], -1, -1):
            yield from rec(i + 1, remaining - a * w[i], prefix + (a,))

    if target < 0:
        return
    yield from rec(0, target, ())


def enumerate_layer(sig: Signature, k: int,
                    max_weight: int = DEFAULT_MAX_LAYER_WEIGHT) -> list[Monomial]:
    """Basis of the weight-``k`` fields ``g_k(h)`` in canonical order."""
    if k > max_weight:
        raise CapExceeded("max_layer_weight", max_weight, k)
    out = []
    for j, r in enumerate(sig.weights):
        for alpha in exponent_vectors(sig, k + r):
            out.append(Monomial(alpha, j))
    out.sort(key=canonical_key)
    return out


# -- text grammar ---------------------------------------------------------------

class FieldSyntaxError(ValueError):
    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position}: {text!r}")


def format_term(m: Monomial, c: Fraction) -> str:
    parts = []
    if c == -1:
        prefix = "-"
    else:
        prefix = ""
        if c != 1:
            parts.append(str(c))
    for i, a in enumerate(m.alpha):
        if a == 1:
            parts.append(f"x{i + 1}")
        elif a > 1:
            parts.append(f"x{i + 1}^{a}")
    parts.append(f"d{m.j + 1}")
    return prefix + "*".join(parts)


def format_field(x: PolynomialVectorField) -> str:
    out = []
    for m, c in x.items():
        if not out:
            out.append(format_term(m, c))
        elif c < 0:
            out.append(" - " + format_term(m, -c))
        else:
            out.append(" + " + format_term(m, c))
    return "".join(out) or "0"


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<sym>[-+*/^xd]))")


def parse_field(text: str, n: int | None = None) -> PolynomialVectorField:
    """Parse the grammar ``term (('+'|'-') term)*``, ``term := coeff? mono* 'd' index``.

    Example: ``"x1^2*d3 - 2*x2*d1"``.  ``n`` bounds the coordinate indices; when
    omitted the largest index that occurs is used.
    """
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise FieldSyntaxError("unexpected character", text, pos)
        kind = "num" if m.group("num") is not None else m.group("sym")
        tokens.append((kind, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    tokens.append(("end", "", len(text)))

    i = 0

    def peek():
        return tokens[i][0]

    def take(kind, what):
        nonlocal i
        tok = tokens[i]
        if tok[0] != kind:
            raise FieldSyntaxError(f"expected {what}", text, tok[2])
        i += 1
        return tok

    def index():
        tok = take("num", "coordinate index")
        idx = int(tok[1])
        if idx < 1:
            raise FieldSyntaxError("coordinate indices start at 1", text, tok[2])
        return idx, tok[2]

    raw_terms: list[tuple[Fraction, dict[int, int], int, int]] = []

    if peek() == "num" and tokens[i][1] == "0" and tokens[i + 1][0] == "end":
        return PolynomialVectorField()

    sign = 1
    if peek() in "+-":
        sign = -1 if take(peek(), "sign")[1] == "-" else 1
    while True:
        coeff = Fraction(sign)
        if peek() == "num":
            num = int(take("num", "number")[1])
            den = 1
            if peek() == "/":
                take("/", "'/'")
                tok = take("num", "denominator")
                den = int(tok[1])
                if den == 0:
                    raise FieldSyntaxError("zero denominator", text, tok[2])
            coeff *= Fraction(num, den)
            if peek() == "*":
                take("*", "'*'")
        exps: dict[int, int] = {}
        while peek() == "x":
            take("x", "'x'")
            idx, _ = index()
            e = 1
            if peek() == "^":
                take("^", "'^'")
                e = int(take("num", "non-negative integer exponent")[1])
            exps[idx] = exps.get(idx, 0) + e
            if peek() == "*":
                take("*", "'*'")
        take("d", "'d'")
        j, jpos = index()
        raw_terms.append((coeff, exps, j, jpos))
        if peek() == "end":
            break
        if peek() not in "+-":
            raise FieldSyntaxError("expected '+' or '-'", text, tokens[i][2])
        sign = -1 if take(peek(), "sign")[1] == "-" else 1

    if n is None:
        n = max(max([j for _, _, j, _ in raw_terms] + [k for _, e, _, _ in raw_terms for k in e]), 1)
    terms: dict[Monomial, Fraction] = {}
    for coeff, exps, j, jpos in raw_terms:
        if j > n or any(k > n for k in exps):
            raise IndexError(f"coordinate index out of range for n={n} in {text!r}")
        m = Monomial(tuple(exps.get(k + 1, 0) for k in range(n)), j - 1)
        terms[m] = terms.get(m, 0) + coeff
    return PolynomialVectorField(terms)
