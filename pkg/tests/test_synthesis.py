import random

import gmpy2
import mpmath as mp
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given
from hypothesis import strategies as st

from expspan import (
    DiagonalOperator,
    Interval,
    PrecisionConfig,
    SpanElement,
    adjoint_consistency,
    apply_T,
    apply_T_star,
    build_space,
    commutator_norm,
    compute_biorthogonal,
    evaluate,
    krylov_synthesis_check,
    make_weights,
    norm,
    shift_consistency,
    squares_family,
    tail_norm,
    validate_exponents,
    verify_eigensystem,
)
from expspan.errors import (
    DimensionMismatchError,
    DistinctnessError,
    DomainError,
    UndecidedRankError,
    UsageError,
    WeightBoundError,
)
from expspan.numerics import working_precision
from expspan.synthesis import (
    diagonal_gram_control,
    norm_bound_constant,
    operator_report,
    random_span_element,
    tail_epsilons,
)

from .oracles import gram_closed_form, mpf_of

UNIT = Interval(0, 1)


def _op(exponents, delta="0.5", kind="shift", values=None, bits=512):
    sp = build_space(exponents, UNIT, PrecisionConfig(bits))
    return DiagonalOperator(sp, compute_biorthogonal(sp), make_weights(delta, sp.exponents, kind, values, bits))


@pytest.fixture(scope="module")
def op_ln2():
    """lambda = (1, 2), delta = ln 2, so u = (1/2, 1/4)."""
    with working_precision(512):
        d = gmpy2.log(mpfr(2))
    return _op(validate_exponents(["1", "2"]), d)


def _oracle_orthonormal(lams, u):
    """L^T diag(u) L^{-T} from mpmath's own Cholesky of the closed-form Gram."""
    G = gram_closed_form(lams)
    L = mp.cholesky(G)
    n = len(lams)
    D = mp.diag([u[k] for k in range(n)])
    return L.T * D * (L.T ** -1)


def _oracle_spectral_norm(B):
    s = mp.svd_r(B, compute_uv=False)
    return max(s[i] for i in range(len(s)))


def test_shift_weights_values(op_ln2):
    u = op_ln2.weights.u
    with working_precision(512):
        assert abs(u[0] - mpfr("0.5")) < mpfr(2) ** -500
        assert abs(u[1] - mpfr("0.25")) < mpfr(2) ** -500
    assert op_ln2.weights.kind == "shift"


def test_weight_validation():
    ex = validate_exponents(["1", "2"])
    with working_precision(512):
        over = [mpfr("1.01") * gmpy2.exp(mpfr("-0.5")), mpfr("0.1")]
    with pytest.raises(WeightBoundError) as info:
        make_weights("0.5", ex, "custom", over)
    assert info.value.n == 1
    with pytest.raises(DistinctnessError):
        make_weights("0.5", ex, "custom", ["0.1", "0.1"])
    with pytest.raises(DomainError):
        make_weights("0.5", ex, "custom", ["0", "0.1"])
    with pytest.raises(DomainError):
        make_weights("0", ex)
    with pytest.raises(DimensionMismatchError):
        make_weights("0.5", ex, "custom", ["0.1"])
    with pytest.raises(UsageError):
        make_weights("0.5", ex, "other")


def test_apply_T_examples(op_ln2):
    tf = apply_T(op_ln2, SpanElement([1, 1]))
    with working_precision(512):
        assert abs(tf.coeffs[0] - mpfr("0.5")) < mpfr(2) ** -500
        assert abs(tf.coeffs[1] - mpfr("0.25")) < mpfr(2) ** -500
    assert apply_T(op_ln2, SpanElement.zero(2)).coeffs == (0, 0)
    with pytest.raises(DimensionMismatchError):
        apply_T(op_ln2, SpanElement([1, 2, 3]))


def test_T_is_a_shift_in_the_variable(op_ln2):
    f = SpanElement([1, 1])
    assert shift_consistency(op_ln2, f, [0, mpfr("0.5"), mpc(-1, 2)]) < mpfr(2) ** -480
    with pytest.raises(UsageError):
        shift_consistency(op_ln2, f, [2])


def test_shift_consistency_rejects_custom_weights():
    op = _op(validate_exponents(["1", "2"]), "0.5", "custom", ["0.1", "-0.05"])
    with pytest.raises(UsageError):
        shift_consistency(op, SpanElement([1, 1]), [0])


def test_T_star_eigenpairs(op_ln2):
    with working_precision(512):
        for k in (1, 2):
            r = op_ln2.bio.r(k)
            img = apply_T_star(op_ln2, r)
            diff = img - r * op_ln2.weights.u[k - 1].conjugate()
            assert norm(diff, op_ln2.space) <= mpfr(10) ** -35 * norm(r, op_ln2.space)
    assert apply_T_star(op_ln2, SpanElement.zero(2)).coeffs == (0, 0)


def test_T_star_tends_to_identity_as_delta_shrinks():
    ex = squares_family(4)
    f = SpanElement([1, -1, 2, mpc(0, 1)])
    gaps = []
    for d in ("0.1", "0.01", "0.001"):
        op = _op(ex, d)
        with working_precision(512):
            gaps.append(norm(apply_T_star(op, f) - f, op.space))
    assert gaps[0] > gaps[1] > gaps[2]


def test_adjoint_identity(ref_op):
    rng = random.Random(11)
    for _ in range(5):
        h = random_span_element(rng, 8)
        f = random_span_element(rng, 8)
        assert adjoint_consistency(ref_op, h, f) < mpfr(10) ** -30
    z = SpanElement.zero(8)
    assert adjoint_consistency(ref_op, z, z) == 0


def test_eigensystem_report(ref_op):
    rep = verify_eigensystem(ref_op)
    assert all(v == 0 for v in rep.t_residuals)
    assert max(rep.t_star_residuals) < mpfr(10) ** -35
    assert rep.kernel_trivial and rep.simple
    assert rep.similarity_error < mpfr(10) ** -35
    assert rep.spectrum[0][0] == "0" and "limit point" in rep.spectrum[0][1]
    assert len(rep.spectrum) == 9


def test_commutator_matches_oracle(ref_op):
    lams = [k * k for k in range(1, 9)]
    u = [mp.exp(-mp.mpf("0.5") * l) for l in lams]
    B = _oracle_orthonormal(lams, u)
    K = B * B.T - B.T * B
    ev = mp.eigsy(K, eigvals_only=True)
    ref = max(abs(ev[i]) for i in range(8))
    assert abs(mpf_of(commutator_norm(ref_op)) - ref) <= mp.mpf(10) ** -60 * ref


def test_commutator_examples(op_ln2):
    assert commutator_norm(op_ln2) > 1000 * mpfr(2) ** -512
    with pytest.raises(UsageError):
        commutator_norm(_op(validate_exponents(["1"])))


def test_commutator_invariant_under_unimodular_rotation(ref_op):
    with working_precision(512):
        phase = gmpy2.exp(mpc(0, mpfr("0.7")))
        rotated = [w * phase for w in ref_op.weights.u]
        # rounding may push |u_n| one ulp above the bound; pull it back inside
        rotated = [w * (1 - mpfr(2) ** -500) for w in rotated]
    op = _op(squares_family(8), "0.5", "custom", rotated)
    with working_precision(512):
        a, b = commutator_norm(ref_op), commutator_norm(op)
        assert abs(a - b) <= mpfr(2) ** -400 * a


def test_diagonal_gram_control_is_normal(ref_op):
    assert commutator_norm(diagonal_gram_control(ref_op)) < mpfr(10) ** -40


def test_tail_norm_endpoints(ref_op):
    full = tail_norm(ref_op, 8)
    assert full.computed == 0 and full.analytic_bound == 0 and full.epsilon is None
    last = tail_norm(ref_op, 7)
    assert 0 < last.computed <= last.analytic_bound
    with pytest.raises(UsageError):
        tail_norm(ref_op, 9)


def test_tail_norms_match_oracle_and_bound(ref_op):
    lams = [k * k for k in range(1, 9)]
    for m in range(8):
        u = [mp.mpf(0) if k < m else mp.exp(-mp.mpf("0.5") * lams[k]) for k in range(8)]
        ref = _oracle_spectral_norm(_oracle_orthonormal(lams, u))
        t = tail_norm(ref_op, m)
        assert abs(mpf_of(t.computed) - ref) <= mp.mpf(10) ** -40 * ref
        assert t.computed <= t.analytic_bound
        assert 0 < t.ratio <= 1


def test_tail_norm_is_not_monotone_for_this_operator(ref_op):
    # Oblique projections: dropping e_1 from T raises the norm (1.74 -> 2.98).
    t0, t1 = tail_norm(ref_op, 0), tail_norm(ref_op, 1)
    assert t1.computed > t0.computed
    assert abs(float(t0.computed) - 1.7377) < 1e-4
    assert abs(float(t1.computed) - 2.9760) < 1e-4


def test_tail_epsilons_respect_delta(ref_op):
    eps = tail_epsilons(ref_op)
    with working_precision(512):
        assert all(e < ref_op.weights.delta for e in eps)
        assert eps[-1] == ref_op.weights.delta / 2
    small = _op(squares_family(3), "0.08")
    assert len(tail_epsilons(small)) == 2


def test_norm_bound_constant_dominates(ref_bio):
    with working_precision(512):
        eps = mpfr("0.1")
        K = norm_bound_constant(ref_bio, eps)
        for n, lam in enumerate(ref_bio.space.lambdas):
            assert ref_bio.r_norms[n] <= K * gmpy2.exp((eps - 1) * lam) * (1 + mpfr(2) ** -400)


def test_krylov_examples(ref_op):
    rep = krylov_synthesis_check(ref_op, SpanElement.basis(8, 3))
    assert rep.support == (3,) and rep.dimension == 1 and rep.passed
    rep = krylov_synthesis_check(ref_op, SpanElement.basis(8, 1) + SpanElement.basis(8, 2))
    assert rep.support == (1, 2) and rep.dimension == 2 and rep.passed
    rep = krylov_synthesis_check(ref_op, SpanElement([1] * 8))
    assert rep.dimension == 8 and rep.passed
    with pytest.raises(UsageError):
        krylov_synthesis_check(ref_op, SpanElement.zero(8))


def test_krylov_refuses_to_guess_on_straddling_coefficient(ref_op):
    with working_precision(512):
        tiny = mpfr(2) ** -300
        f = SpanElement([1, tiny, 0, 0, 0, 0, 0, 0])
    with pytest.raises(UndecidedRankError):
        krylov_synthesis_check(ref_op, f)


def test_operator_report_is_deterministic(ref_op):
    a = operator_report(ref_op, seed=3, samples=10)
    b = operator_report(ref_op, seed=3, samples=10)
    assert a == b
    assert a["synthesis"] == {"samples": 10, "passed": 10, "failed": 0, "undecided": 0}
    assert len(a["tail_norms"]) == 9


@given(st.sets(st.integers(1, 8), min_size=1), st.integers(0, 2**32 - 1))
def test_krylov_dimension_equals_support_size(ref_op, support, seed):
    f = random_span_element(random.Random(seed), 8, support)
    rep = krylov_synthesis_check(ref_op, f)
    assert rep.support == tuple(sorted(support))
    assert rep.dimension == len(support)


@given(st.integers(0, 2**32 - 1))
def test_pointwise_shift_property(op_ln2, seed):
    rng = random.Random(seed)
    f = random_span_element(rng, 2)
    with working_precision(512):
        z = mpc(mpfr(rng.uniform(-2, 0.99)), mpfr(rng.uniform(-2, 2)))
        lhs = evaluate(apply_T(op_ln2, f), op_ln2.space, z)
        rhs = evaluate(f, op_ln2.space, z - op_ln2.weights.delta)
        assert abs(lhs - rhs) <= mpfr(10) ** -100 * (1 + abs(rhs))
