from fractions import Fraction

import gmpy2
import mpmath as mp
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given
from hypothesis import strategies as st

from expspan import (
    Interval,
    PrecisionConfig,
    SpanElement,
    build_space,
    evaluate,
    geometric_family,
    inner_product,
    norm,
    squares_family,
    validate_exponents,
)
from expspan.errors import DimensionMismatchError, DistinctnessError, DomainError, PrecisionExhaustedError
from expspan.numerics import quadrature_integrate, working_precision

from .oracles import gram_by_quadrature, gram_closed_form, mpf_of

# [DERIVED] mpmath closed form at 640 bits, lambda = (1, 2) on (0, 1)
G11 = mp.mpf("3.19452804946532511361521373028750390659")
G12 = mp.mpf("6.361845641062555913642843218193905965663")
G22 = mp.mpf("13.3995375082860597695275653007152196007")
FROZEN = mp.mpf(10) ** -37
UNIT = Interval(0, 1)


def close(x, ref, tol=FROZEN):
    return abs(mpf_of(x) - ref) <= tol * abs(ref)


def test_validate_small_sequence():
    ex = validate_exponents(["1", "2", "3"])
    assert ex.exact == (1, 2, 3)
    assert ex.gap == 1
    assert ex.muntz_partial_sum == Fraction(11, 6)


def test_validate_sorts_and_reports_gap_for_squares():
    ex = squares_family(8)
    assert ex.exact == tuple(Fraction(k * k) for k in range(1, 9))
    assert ex.gap == 3
    assert validate_exponents(["4", "1", "9"]).exact == (1, 4, 9)


@pytest.mark.parametrize("raw, err", [
    (["2", "1", "1"], DistinctnessError),
    (["0", "1"], DomainError),
    (["-1", "2"], DomainError),
    (["abc"], DomainError),
    ([], DomainError),
])
def test_validate_rejects(raw, err):
    with pytest.raises(err):
        validate_exponents(raw)


def test_geometric_family():
    ex = geometric_family("1", "2", 5)
    assert ex.exact == (2, 4, 8, 16, 32)
    assert ex.gap == 2
    assert ex.muntz_partial_sum < 1
    with pytest.raises(DomainError):
        geometric_family("1", "1", 3)


def test_interval_rejects_degenerate():
    with pytest.raises(DomainError):
        Interval(1, 1)
    with pytest.raises(DomainError):
        Interval("2", "1")
    assert Interval("-0.5", "1.25").length == Fraction(7, 4)


def test_single_exponent_gram():
    sp = build_space(validate_exponents(["1"]), UNIT)
    assert sp.dim == 1
    assert close(sp.gram[0, 0], G11)


def test_gram_two_exponents(space12):
    G = space12.gram
    assert close(G[0, 0], G11) and close(G[0, 1], G12) and close(G[1, 1], G22)
    assert G[0, 1] == G[1, 0]
    assert space12.bits == 512 and space12.escalations == ()


@pytest.mark.parametrize("lams, a, b", [
    ([1, 4, 9, 16], 0, 1),
    (["0.5", "1.5", "3"], "-1", "2"),
    ([2, 4, 8], "0.25", "0.75"),
])
def test_gram_matches_quadrature_oracle(lams, a, b):
    sp = build_space(validate_exponents([str(x) for x in lams]), Interval(a, b))
    fa, fb = mp.mpf(Fraction(a).numerator) / Fraction(a).denominator, mp.mpf(Fraction(b).numerator) / Fraction(b).denominator
    lam = [mp.mpf(Fraction(x).numerator) / Fraction(x).denominator for x in lams]
    ref = gram_closed_form(lam, fa, fb)
    quad = gram_by_quadrature(lam, fa, fb)
    for i in range(sp.dim):
        for j in range(sp.dim):
            assert close(sp.gram[i, j], ref[i, j], mp.mpf(2) ** -500)
            assert close(sp.gram[i, j], quad[i, j], mp.mpf(10) ** -100)


def test_gram_matches_internal_quadrature():
    sp = build_space(squares_family(4), UNIT)
    cfg = sp.cfg
    for i in range(4):
        for j in range(4):
            s = sp.lambdas[i] + sp.lambdas[j]
            q = quadrature_integrate(lambda t, s=s: gmpy2.exp(s * t), UNIT, cfg)
            with working_precision(512):
                assert abs(q - sp.gram[i, j]) <= mpfr(2) ** -256 * sp.gram[i, j]


def _clustered(k):
    d = Fraction(1, 10**k)
    return validate_exponents([1, 1 + d, 1 + 2 * d])


def test_precision_escalation_is_recorded():
    sp = build_space(_clustered(40), UNIT, PrecisionConfig(128, 4096))
    assert sp.escalations == (128, 256, 512)
    assert sp.bits == 1024


def test_precision_exhaustion():
    with pytest.raises(PrecisionExhaustedError) as info:
        build_space(_clustered(40), UNIT, PrecisionConfig(128, 512))
    assert info.value.limit == 512


def test_evaluate_examples(space12):
    e1 = SpanElement.basis(2, 1)
    assert evaluate(e1, space12, 0) == 1
    assert evaluate(SpanElement([1, -1]), space12, 0) == 0
    with working_precision(512):
        z = mpc(0, gmpy2.const_pi())
        v = evaluate(e1, space12, z)
        assert abs(v + 1) < mpfr(2) ** -500
        w = evaluate(SpanElement([1, 1]), space12, mpfr("0.5"))
        assert abs(w - (gmpy2.exp(mpfr("0.5")) + gmpy2.exp(mpfr(1)))) < mpfr(2) ** -500


def test_inner_product_examples(space12):
    e1 = SpanElement.basis(2, 1)
    ie1 = e1 * mpc(0, 1)
    assert close(inner_product(e1, e1, space12).real, G11)
    v = inner_product(ie1, e1, space12)
    assert v.real == 0 and close(v.imag, G11)
    v = inner_product(e1, ie1, space12)
    assert v.real == 0 and close(v.imag, -G11)
    assert close(norm(e1, space12), mp.sqrt(G11))


def test_dimension_mismatch(space12):
    with pytest.raises(DimensionMismatchError):
        inner_product(SpanElement([1, 2, 3]), SpanElement([1, 2]), space12)
    with pytest.raises(DimensionMismatchError):
        SpanElement([1]) + SpanElement([1, 2])
    with pytest.raises(DimensionMismatchError):
        evaluate(SpanElement([1]), space12, 0)


coeff = st.tuples(st.integers(-5, 5), st.integers(-5, 5)).map(lambda p: complex(*p))
vectors = st.lists(coeff, min_size=4, max_size=4)


@pytest.fixture(scope="module")
def space4():
    return build_space(squares_family(4), UNIT)


@given(vectors, vectors)
def test_inner_product_conjugate_symmetric(space4, x, y):
    f, g = SpanElement(x), SpanElement(y)
    with working_precision(512):
        a = inner_product(f, g, space4)
        b = inner_product(g, f, space4).conjugate()
        assert abs(a - b) <= mpfr(2) ** -480 * (1 + abs(a))


@given(vectors)
def test_inner_product_positive(space4, x):
    f = SpanElement(x)
    with working_precision(512):
        v = inner_product(f, f, space4)
        assert v.imag == 0 or abs(v.imag) <= mpfr(2) ** -480 * abs(v.real)
        if any(x):
            assert v.real > 0
        else:
            assert v == 0


@given(vectors)
def test_inner_product_matches_quadrature_of_evaluations(space4, x):
    f = SpanElement(x)
    val = quadrature_integrate(lambda t: abs(evaluate(f, space4, t)) ** 2, UNIT, space4.cfg)
    with working_precision(512):
        ip = inner_product(f, f, space4).real
        assert abs(val - ip) <= mpfr(2) ** -256 * max(ip, 1)
