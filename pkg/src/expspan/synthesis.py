"""The diagonal operator T f = sum <f, r_n> u_n e_n on the truncated span, and its checks.

In exponential-coefficient coordinates T is diag(u) and T* is
G^{-1} diag(conj u) G.  Operator norms use orthonormal coordinates y = L^T x
(G = L L^T), where T becomes the upper-triangular B = L^T diag(u) L^{-T} and
T* becomes B^H = L^{-1} diag(conj u) L.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import gmpy2
from gmpy2 import mpc, mpfr

from .biorth import BiorthogonalSystem, compute_biorthogonal
from .errors import (
    DimensionMismatchError,
    DistinctnessError,
    DomainError,
    UndecidedRankError,
    UsageError,
    WeightBoundError,
)
from .numerics import (
    PrecisionConfig,
    SpdMatrix,
    cholesky_spd,
    complex_to_decimal,
    half_tolerance,
    hermitian_eigenvalues,
    lower_inverse,
    roundoff_scale,
    spd_solve,
    to_complex,
    to_decimal,
    to_scalar,
    working_precision,
)
from .spaces import (
    ExponentSequence,
    SpanElement,
    TruncatedSpace,
    evaluate,
    exact,
    gram_apply,
    inner_product,
    norm,
)


@dataclass(frozen=True)
class WeightSequence:
    u: tuple
    delta: mpfr
    kind: str  # "shift" or "custom"

    def __len__(self):
        return len(self.u)


def _as_delta(delta):
    if isinstance(delta, mpfr):
        return delta
    return to_scalar(exact(delta))


def make_weights(
    delta, exponents: ExponentSequence, kind: str = "shift", values: Sequence | None = None, bits: int = 512
) -> WeightSequence:
    """Weights with |u_n| <= exp(-delta lambda_n); ``kind="shift"`` gives equality (real, positive)."""
    with working_precision(bits):
        d = _as_delta(delta)
        if not d > 0:
            raise DomainError(f"delta must be positive, got {d}")
        lam = exponents.values(bits)
        bounds = [gmpy2.exp(-d * l) for l in lam]
        if kind == "shift":
            return WeightSequence(tuple(mpc(b) for b in bounds), d, "shift")
        if kind != "custom":
            raise UsageError(f"unknown weight kind {kind!r}")
        if values is None or len(values) != len(lam):
            raise DimensionMismatchError("custom weights need one value per exponent")
        u = tuple(to_complex(v if not isinstance(v, str) else to_scalar(exact(v))) for v in values)
        for n, (w, bound) in enumerate(zip(u, bounds), start=1):
            if w == 0:
                raise DomainError(f"weight u_{n} is zero")
            if abs(w) > bound:
                raise WeightBoundError(n, abs(w), bound)
        for i in range(len(u)):
            for j in range(i):
                if u[i] == u[j]:
                    raise DistinctnessError(f"weights u_{j + 1} and u_{i + 1} coincide")
        return WeightSequence(u, d, "custom")


@dataclass(frozen=True)
class DiagonalOperator:
    space: TruncatedSpace
    bio: BiorthogonalSystem
    weights: WeightSequence

    def __post_init__(self):
        if not (self.space.dim == self.bio.dim == len(self.weights)):
            raise DimensionMismatchError("space, biorthogonal system and weights disagree in dimension")

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def bits(self) -> int:
        return self.space.bits

    @cached_property
    def _factor_inverse(self):
        with working_precision(self.bits):
            return lower_inverse(self.space.gram_factor)

    def orthonormal_matrix(self, u: Sequence) -> list:
        """L^T diag(u) L^{-T}: coordinate matrix of a coefficient-diagonal map in orthonormal coordinates."""
        L, Li = self.space.gram_factor, self._factor_inverse
        n = self.dim
        with working_precision(self.bits):
            # (L^T D L^{-T})_{ij} = sum_k L_{ki} u_k Li_{jk}, upper triangular
            return [
                [sum((L[k][i] * u[k] * Li[j][k] for k in range(i, j + 1)), mpc(0)) if j >= i else mpc(0) for j in range(n)]
                for i in range(n)
            ]


def _check(op, f):
    if len(f) != op.dim:
        raise DimensionMismatchError(f"element has dimension {len(f)}, operator acts on {op.dim}")


def apply_T(op: DiagonalOperator, f: SpanElement) -> SpanElement:
    """T f: coefficient c_n becomes u_n c_n."""
    _check(op, f)
    with working_precision(op.bits):
        return SpanElement(u * c for u, c in zip(op.weights.u, f.coeffs))


def apply_T_star(op: DiagonalOperator, f: SpanElement) -> SpanElement:
    """T* f = sum_n <f, e_n> conj(u_n) r_n, i.e. G^{-1} diag(conj u) G on coefficients."""
    _check(op, f)
    with working_precision(op.bits):
        moments = gram_apply(op.space, f.coeffs)
        scaled = [w.conjugate() * m for w, m in zip(op.weights.u, moments)]
        return SpanElement(spd_solve(op.space.gram, scaled, factor=op.space.gram_factor))


def adjoint_consistency(op: DiagonalOperator, h: SpanElement, f: SpanElement) -> mpfr:
    """|<T h, f> - <h, T* f>| / (||h|| ||f|| max|u| + floor)."""
    _check(op, h)
    _check(op, f)
    with working_precision(op.bits):
        lhs = inner_product(apply_T(op, h), f, op.space)
        rhs = inner_product(h, apply_T_star(op, f), op.space)
        umax = max(abs(u) for u in op.weights.u)
        floor = mpfr(2) ** (-2 * op.bits)
        return abs(lhs - rhs) / (norm(h, op.space) * norm(f, op.space) * umax + floor)


@dataclass(frozen=True)
class EigenReport:
    t_residuals: tuple  # max coefficient error of T e_k - u_k e_k (exactly 0)
    t_star_residuals: tuple  # ||T* r_k - conj(u_k) r_k|| / (|u_k| ||r_k||)
    kernel_trivial: bool
    simple: bool
    similarity_error: mpfr  # max relative gap between diag(L^{-1} conj(D) L) and conj(u)
    spectrum: tuple  # ((value, note), ...)


def verify_eigensystem(op: DiagonalOperator) -> EigenReport:
    n = op.dim
    u = op.weights.u
    with working_precision(op.bits):
        t_res = []
        for k in range(1, n + 1):
            ek = SpanElement.basis(n, k)
            img = apply_T(op, ek)
            t_res.append(max(abs(a - u[k - 1] * b) for a, b in zip(img.coeffs, ek.coeffs)))
        ts_res = []
        for k in range(1, n + 1):
            rk = op.bio.r(k)
            diff = apply_T_star(op, rk) - rk * u[k - 1].conjugate()
            ts_res.append(norm(diff, op.space) / (abs(u[k - 1]) * op.bio.r_norms[k - 1]))
        L, Li = op.space.gram_factor, op._factor_inverse
        sim = max(abs(Li[i][i] * u[i].conjugate() * L[i][i] - u[i].conjugate()) / abs(u[i]) for i in range(n))
        distinct = all(u[i] != u[j] for i in range(n) for j in range(i))
        spectrum = (("0", "limit point of {u_n}, not an eigenvalue at truncation"),) + tuple(
            (complex_to_decimal(w), f"eigenvalue of T (eigenvector e_{k})") for k, w in enumerate(u, start=1)
        )
    return EigenReport(
        tuple(t_res), tuple(ts_res), all(w != 0 for w in u), distinct, sim, spectrum
    )


def _commutator(B):
    n = len(B)
    Bh = [[B[j][i].conjugate() for j in range(n)] for i in range(n)]
    K = [[mpc(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            K[i][j] = sum((B[i][k] * Bh[k][j] - Bh[i][k] * B[k][j] for k in range(n)), mpc(0))
    return K


def commutator_norm(op: DiagonalOperator) -> mpfr:
    """||T T* - T* T|| on the truncated span (largest |eigenvalue| of the Hermitian commutator)."""
    if op.dim < 2:
        raise UsageError("commutator needs N >= 2")
    with working_precision(op.bits):
        B = op.orthonormal_matrix(op.weights.u)
        K = _commutator(B)
        for i in range(op.dim):
            K[i][i] = mpc(K[i][i].real)
            for j in range(i):
                avg = (K[i][j] + K[j][i].conjugate()) / 2
                K[i][j], K[j][i] = avg, avg.conjugate()
        return max(abs(v) for v in hermitian_eigenvalues(K))


def with_diagonal_gram(space: TruncatedSpace) -> TruncatedSpace:
    """Copy of ``space`` whose Gram off-diagonal entries are zeroed (control for non-normality)."""
    with working_precision(space.bits):
        gram = SpdMatrix([[v if i == j else mpfr(0) for j, v in enumerate(row)] for i, row in enumerate(space.gram.lower)])
        factor = cholesky_spd(gram)
    return TruncatedSpace(space.exponents, space.interval, space.cfg, space.lambdas, gram, factor, space.norms, space.escalations)


def diagonal_gram_control(op: DiagonalOperator) -> DiagonalOperator:
    space = with_diagonal_gram(op.space)
    return DiagonalOperator(space, compute_biorthogonal(space), op.weights)


@dataclass(frozen=True)
class TailNorm:
    m: int
    computed: mpfr
    analytic_bound: mpfr
    epsilon: mpfr | None

    @property
    def ratio(self):
        return self.computed / self.analytic_bound if self.analytic_bound else mpfr(0)


def _spectral_norm(B) -> mpfr:
    n = len(B)
    P = [
        [sum((B[k][i].conjugate() * B[k][j] for k in range(n)), mpc(0)) for j in range(n)]
        for i in range(n)
    ]
    for i in range(n):
        P[i][i] = mpc(P[i][i].real)
        for j in range(i):
            P[j][i] = P[i][j].conjugate()
    top = max(hermitian_eigenvalues(P))
    return gmpy2.sqrt(top) if top > 0 else mpfr(0)


def tail_epsilons(op: DiagonalOperator) -> list:
    """The bound-fit grid {0.05, 0.1, 0.2}(b-a) restricted to eps < delta, plus delta/2."""
    with working_precision(op.bits):
        length = to_scalar(op.space.interval.length)
        d = op.weights.delta
        grid = [to_scalar(f) * length for f in ("0.05", "0.1", "0.2")]
        return [e for e in grid if e < d] + [d / 2]


def norm_bound_constant(bio: BiorthogonalSystem, eps) -> mpfr:
    """Smallest K with ||r_n|| <= K e^{(-b+eps) lambda_n} on the data (the fitted norm-bound constant)."""
    with working_precision(bio.bits):
        _, b = bio.space.interval.endpoints(bio.bits)
        log_d = bio.log_distances()
        return gmpy2.exp(max(-ld + (b - eps) * l for ld, l in zip(log_d, bio.space.lambdas)))


def tail_norm(op: DiagonalOperator, m: int) -> TailNorm:
    """||T - T_m|| and the estimate K_eps * c_ab * sum_{n>m} e^{(-delta+eps) lambda_n}.

    K_eps is :func:`norm_bound_constant`, c_ab = max(1, sqrt(b-a)) bounds
    ||e_n|| e^{-b lambda_n}, and eps runs over :func:`tail_epsilons`, keeping
    whichever gives the smallest bound.
    """
    n = op.dim
    if not 0 <= m <= n:
        raise UsageError(f"cutoff {m} outside 0..{n}")
    if m == n:
        return TailNorm(m, mpfr(0), mpfr(0), None)
    with working_precision(op.bits):
        tail_u = [mpc(0) if k < m else op.weights.u[k] for k in range(n)]
        computed = _spectral_norm(op.orthonormal_matrix(tail_u))
        c_ab = max(mpfr(1), gmpy2.sqrt(to_scalar(op.space.interval.length)))
        d = op.weights.delta
        lam = op.space.lambdas
        best = None
        for eps in tail_epsilons(op):
            k_eps = norm_bound_constant(op.bio, eps)
            bound = k_eps * c_ab * sum(gmpy2.exp((eps - d) * lam[k]) for k in range(m, n))
            if best is None or bound < best[0]:
                best = (bound, eps)
        return TailNorm(m, computed, best[0], best[1])


def shift_consistency(op: DiagonalOperator, f: SpanElement, sample_points: Sequence) -> mpfr:
    """max over z of |(T f)(z) - f(z - delta)| / (1 + |f(z - delta)|)."""
    if op.weights.kind != "shift":
        raise UsageError("shift_consistency needs shift weights u_n = exp(-delta lambda_n)")
    _check(op, f)
    with working_precision(op.bits):
        _, b = op.space.interval.endpoints(op.bits)
        tf = apply_T(op, f)
        worst = mpfr(0)
        for z in sample_points:
            z = to_complex(z)
            if not z.real < b:
                raise UsageError(f"sample point {z} is outside Re z < b")
            shifted = evaluate(f, op.space, z - op.weights.delta)
            worst = max(worst, abs(evaluate(tf, op.space, z) - shifted) / (1 + abs(shifted)))
        return worst


@dataclass(frozen=True)
class SynthesisReport:
    support: tuple  # 1-based indices n with c_n != 0
    dimension: int  # dim span{f, Tf, ..., T^{N-1} f}
    span_residual: mpfr  # worst mutual projection residual between the Krylov space and span{e_n : n in S}
    steps: tuple = field(default=())  # relative Arnoldi residual at each step

    @property
    def passed(self) -> bool:
        return self.dimension == len(self.support)


def _support(coeffs, bits):
    cmax = max(abs(c) for c in coeffs)
    if cmax == 0:
        raise UsageError("Krylov check needs a nonzero element")
    hi = half_tolerance(bits) * cmax
    lo = hi * mpfr(2) ** (-(bits // 4))
    support = []
    for k, c in enumerate(coeffs, start=1):
        a = abs(c)
        if a > hi:
            support.append(k)
        elif a > lo:
            raise UndecidedRankError(f"|c_{k}| = {float(a):.3e} straddles the support threshold")
    return tuple(support)


def krylov_synthesis_check(op: DiagonalOperator, f: SpanElement) -> SynthesisReport:
    """Compare the cyclic subspace of f with the eigenvector span over supp(f).

    The Krylov basis is built by Arnoldi with repeated Gram-Schmidt in the L2
    geometry (orthonormal coordinates y = L^T x alongside the coefficient
    vectors x).  A step whose new direction is below 2^(-3 bits/4) of the
    applied vector ends the space; between that and 2^(-bits/2) the rank is
    undecided and an error is raised instead of guessing.
    """
    _check(op, f)
    n = op.dim
    bits = op.bits
    L = op.space.gram_factor
    u = op.weights.u
    with working_precision(bits):
        zero_tol = mpfr(2) ** (-(3 * bits // 4))
        rank_tol = half_tolerance(bits)

        def ortho(x):
            return [sum((L[k][i] * x[k] for k in range(i, n)), mpc(0)) for i in range(n)]

        def enorm(y):
            return gmpy2.sqrt(sum((abs(v) ** 2 for v in y), mpfr(0)))

        support = _support(f.coeffs, bits)
        x0 = list(f.coeffs)
        y0 = ortho(x0)
        nrm = enorm(y0)
        Qx, Qy = [[c / nrm for c in x0]], [[c / nrm for c in y0]]
        steps = []
        while len(Qx) < n:
            wx = [uk * c for uk, c in zip(u, Qx[-1])]
            wy = ortho(wx)
            before = enorm(wy)
            for _ in range(2):
                for qx, qy in zip(Qx, Qy):
                    alpha = sum((a * b.conjugate() for a, b in zip(wy, qy)), mpc(0))
                    wx = [a - alpha * b for a, b in zip(wx, qx)]
                    wy = [a - alpha * b for a, b in zip(wy, qy)]
            h = enorm(wy)
            rel = h / before if before else mpfr(0)
            steps.append(rel)
            if rel <= zero_tol:
                break
            if rel <= rank_tol:
                raise UndecidedRankError(f"Arnoldi step {len(Qx)}: relative residual {float(rel):.3e} straddles the rank threshold")
            Qx.append([c / h for c in wx])
            Qy.append([c / h for c in wy])
        dim = len(Qx)

        # Krylov basis vectors must vanish off the support ...
        off = [k for k in range(n) if k + 1 not in support]
        worst = max((abs(q[k]) * op.space.norms[k] for q in Qx for k in off), default=mpfr(0))
        # ... and each e_n on the support must lie in the Krylov span.
        for k in support:
            ey = [L[k - 1][i] for i in range(n)]  # L^T e_k
            res = list(ey)
            for qy in Qy:
                alpha = sum((a * b.conjugate() for a, b in zip(ey, qy)), mpc(0))
                res = [a - alpha * b for a, b in zip(res, qy)]
            worst = max(worst, enorm(res) / op.space.norms[k - 1])
        if worst > rank_tol and dim == len(support):
            raise UndecidedRankError(f"Krylov span residual {float(worst):.3e} exceeds {float(rank_tol):.3e}")
    return SynthesisReport(support, dim, worst, tuple(steps))


def random_span_element(rng: random.Random, n: int, support: Sequence[int] | None = None, bits: int = 512) -> SpanElement:
    """Complex coefficients with real and imaginary parts uniform in [-1, 1] on ``support`` (1-based)."""
    support = range(1, n + 1) if support is None else set(support)
    with working_precision(bits):
        return SpanElement(
            mpc(rng.uniform(-1, 1), rng.uniform(-1, 1)) if k in support else mpc(0) for k in range(1, n + 1)
        )


def operator_report(op: DiagonalOperator, seed: int = 0, samples: int = 100) -> dict:
    """JSON-ready summary: weights, eigen residuals, commutator, tail norms, synthesis pass counts."""
    rng = random.Random(seed)
    n = op.dim
    eig = verify_eigensystem(op)
    with working_precision(op.bits):
        adj = max(adjoint_consistency(op, random_span_element(rng, n, bits=op.bits), random_span_element(rng, n, bits=op.bits)) for _ in range(samples))
        tails = [tail_norm(op, m) for m in range(n + 1)]
        passes = fails = undecided = 0
        for _ in range(samples):
            k = rng.randint(1, n)
            support = sorted(rng.sample(range(1, n + 1), k))
            try:
                rep = krylov_synthesis_check(op, random_span_element(rng, n, support, op.bits))
            except UndecidedRankError:
                undecided += 1
                continue
            if rep.passed:
                passes += 1
            else:
                fails += 1
        comm = commutator_norm(op) if n >= 2 else mpfr(0)
        return {
            "dimension": n,
            "precision_bits": op.bits,
            "delta": to_decimal(op.weights.delta),
            "weight_kind": op.weights.kind,
            "weights": [complex_to_decimal(w) for w in op.weights.u],
            "eigen": {
                "t_residual_max": to_decimal(max(eig.t_residuals)),
                "t_star_residuals": [to_decimal(v) for v in eig.t_star_residuals],
                "kernel_trivial": eig.kernel_trivial,
                "simple": eig.simple,
                "similarity_error": to_decimal(eig.similarity_error),
                "spectrum": [{"value": v, "note": note} for v, note in eig.spectrum],
            },
            "adjoint_max_residual": to_decimal(adj),
            "commutator_norm": to_decimal(comm),
            "tail_norms": [
                {
                    "m": t.m,
                    "computed": to_decimal(t.computed),
                    "analytic_bound": to_decimal(t.analytic_bound),
                    "epsilon": to_decimal(t.epsilon) if t.epsilon is not None else None,
                    "ratio": to_decimal(t.ratio),
                }
                for t in tails
            ],
            "synthesis": {"samples": samples, "passed": passes, "failed": fails, "undecided": undecided},
        }
