"""Exponent sequences, the interval, closed-form Gram matrices and finite Dirichlet polynomials.

Exact inputs (decimal strings, ints, Fractions) are kept as :class:`Fraction`
and converted to binary floating point only when a space is built, so a
rebuild at higher precision re-converts from the source values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import (
    DimensionMismatchError,
    DistinctnessError,
    DomainError,
    NotPositiveDefiniteError,
    PrecisionExhaustedError,
)
from .numerics import (
    PrecisionConfig,
    SpdMatrix,
    cholesky_spd,
    roundoff_scale,
    to_complex,
    to_scalar,
    working_precision,
)


def exact(value) -> Fraction:
    """Parse a decimal string / int / Fraction into an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DomainError(f"not a number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise DomainError(f"not a decimal number: {value!r}") from None
    raise DomainError(f"unsupported numeric input: {value!r}")


@dataclass(frozen=True)
class Interval:
    a: Fraction
    b: Fraction

    def __init__(self, a, b):
        a, b = exact(a), exact(b)
        if not a < b:
            raise DomainError(f"interval requires a < b, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def endpoints(self, bits: int) -> tuple[mpfr, mpfr]:
        with working_precision(bits):
            return to_scalar(self.a), to_scalar(self.b)

    @property
    def length(self) -> Fraction:
        return self.b - self.a


@dataclass(frozen=True)
class ExponentSequence:
    """Validated truncation lambda_1 < ... < lambda_N of a positive exponent sequence."""

    exact: tuple[Fraction, ...]
    gap: Fraction | None
    muntz_partial_sum: Fraction

    def __len__(self):
        return len(self.exact)

    def values(self, bits: int) -> tuple[mpfr, ...]:
        with working_precision(bits):
            return tuple(to_scalar(v) for v in self.exact)

    def truncate(self, n: int) -> ExponentSequence:
        return validate_exponents(self.exact[:n])


def validate_exponents(raw: Iterable) -> ExponentSequence:
    """Sort, check positivity and distinctness, and record the gap and Muntz partial sum.

    Only the finite truncation can be checked; the infinite conditions
    sum 1/lambda_n < inf and inf gap > 0 are guaranteed by the generator
    families below, not by this function.
    """
    values = [exact(v) for v in raw]
    if not values:
        raise DomainError("exponent list is empty")
    for i, v in enumerate(values):
        if v <= 0:
            raise DomainError(f"exponent #{i + 1} is not positive: {v}")
    values.sort()
    for lo, hi in zip(values, values[1:]):
        if lo == hi:
            raise DistinctnessError(f"duplicate exponent {lo}")
    gap = min((hi - lo for lo, hi in zip(values, values[1:])), default=None)
    return ExponentSequence(tuple(values), gap, sum((1 / v for v in values), Fraction(0)))


def squares_family(n: int) -> ExponentSequence:
    """lambda_k = k^2, k = 1..n.  Gap >= 3 and sum 1/k^2 < inf in the infinite limit."""
    return validate_exponents(k * k for k in range(1, n + 1))


def geometric_family(q, r, n: int) -> ExponentSequence:
    """lambda_k = q r^k, k = 1..n, with q > 0 and r > 1.

    In the infinite limit the gaps q r^k (r - 1) grow and sum 1/lambda_k is a
    convergent geometric series.
    """
    q, r = exact(q), exact(r)
    if q <= 0 or r <= 1:
        raise DomainError("geometric family needs q > 0 and r > 1")
    return validate_exponents(q * r**k for k in range(1, n + 1))


@dataclass(frozen=True)
class SpanElement:
    """f(z) = sum_n coeffs[n-1] * exp(lambda_n z)."""

    coeffs: tuple

    def __init__(self, coeffs: Iterable):
        object.__setattr__(self, "coeffs", tuple(to_complex(c) for c in coeffs))

    @classmethod
    def zero(cls, n: int) -> SpanElement:
        return cls([0] * n)

    @classmethod
    def basis(cls, n: int, k: int) -> SpanElement:
        """e_k as a span element of dimension n (k is 1-based)."""
        return cls([1 if i == k - 1 else 0 for i in range(n)])

    def __len__(self):
        return len(self.coeffs)

    def _check(self, other: SpanElement):
        if len(self) != len(other):
            raise DimensionMismatchError(f"dimensions differ: {len(self)} vs {len(other)}")

    def __add__(self, other: SpanElement) -> SpanElement:
        self._check(other)
        return SpanElement(x + y for x, y in zip(self.coeffs, other.coeffs))

    def __sub__(self, other: SpanElement) -> SpanElement:
        self._check(other)
        return SpanElement(x - y for x, y in zip(self.coeffs, other.coeffs))

    def __neg__(self) -> SpanElement:
        return SpanElement(-x for x in self.coeffs)

    def __mul__(self, alpha) -> SpanElement:
        alpha = to_complex(alpha)
        return SpanElement(alpha * x for x in self.coeffs)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TruncatedSpace:
    exponents: ExponentSequence
    interval: Interval
    cfg: PrecisionConfig
    lambdas: tuple
    gram: SpdMatrix
    gram_factor: list = field(repr=False)
    norms: tuple
    escalations: tuple = ()

    @property
    def bits(self) -> int:
        return self.cfg.mantissa_bits

    @property
    def dim(self) -> int:
        return len(self.lambdas)

    def normalized_gram(self) -> SpdMatrix:
        with working_precision(self.bits):
            return self.gram.normalized()

    def check_dim(self, f: SpanElement):
        if len(f) != self.dim:
            raise DimensionMismatchError(f"element has dimension {len(f)}, space has {self.dim}")


def gram_entry(lam_sum, a, b):
    """integral_a^b exp(s t) dt for s = lambda_n + lambda_m > 0, without cancellation."""
    return gmpy2.exp(lam_sum * a) * gmpy2.expm1(lam_sum * (b - a)) / lam_sum


def _assemble(exponents: ExponentSequence, interval: Interval, bits: int):
    with working_precision(bits):
        lam = exponents.values(bits)
        a, b = interval.endpoints(bits)
        gram = SpdMatrix.from_function(len(lam), lambda i, j: gram_entry(lam[i] + lam[j], a, b))
        # a pivot at roundoff level is noise, not evidence of positive definiteness
        factor = cholesky_spd(gram, roundoff_scale(len(lam), bits))
        norms = tuple(gmpy2.sqrt(d) for d in gram.diagonal())
    return lam, gram, factor, norms


def build_space(
    exponents: ExponentSequence, interval: Interval, cfg: PrecisionConfig | None = None
) -> TruncatedSpace:
    """Assemble the Gram matrix in closed form and factor it, doubling precision on failure.

    A factorization counts as failed when any pivot is at or below the
    roundoff scale n^2 2^(8-bits) relative to its diagonal entry.
    """
    cfg = cfg or PrecisionConfig()
    tried = []
    bits = cfg.mantissa_bits
    while bits <= cfg.escalation_limit:
        try:
            lam, gram, factor, norms = _assemble(exponents, interval, bits)
        except NotPositiveDefiniteError as err:
            tried.append(bits)
            last = err
            bits *= 2
            continue
        used = PrecisionConfig(bits, cfg.escalation_limit)
        return TruncatedSpace(exponents, interval, used, lam, gram, factor, norms, tuple(tried))
    raise PrecisionExhaustedError(cfg.escalation_limit, f"Gram factorization failed: {last}")


def evaluate(f: SpanElement, space: TruncatedSpace, z) -> mpc:
    """sum_n c_n exp(lambda_n z), summed in ascending n."""
    space.check_dim(f)
    with working_precision(space.bits):
        z = to_complex(z)
        total = mpc(0)
        for c, lam in zip(f.coeffs, space.lambdas):
            if c != 0:
                total += c * gmpy2.exp(lam * z)
        return total


def gram_apply(space: TruncatedSpace, x: Sequence) -> list:
    """G x for a coefficient vector x (real or complex)."""
    G = space.gram
    n = space.dim
    with working_precision(space.bits):
        return [sum((G[i, j] * x[j] for j in range(n)), mpc(0)) for i in range(n)]


def inner_product(f: SpanElement, g: SpanElement, space: TruncatedSpace) -> mpc:
    """<f, g> = integral_a^b f conj(g) dt = f^T G conj(g) in coefficient algebra."""
    space.check_dim(f)
    space.check_dim(g)
    with working_precision(space.bits):
        gbar = [c.conjugate() for c in g.coeffs]
        Gg = gram_apply(space, gbar)
        return sum((c * v for c, v in zip(f.coeffs, Gg)), mpc(0))


def norm(f: SpanElement, space: TruncatedSpace) -> mpfr:
    with working_precision(space.bits):
        sq = inner_product(f, f, space).real
        return gmpy2.sqrt(sq) if sq > 0 else mpfr(0)


def coefficient_inner(x: Sequence, y: Sequence, space: TruncatedSpace) -> mpc:
    """<x, y> for raw coefficient vectors."""
    return inner_product(SpanElement(x), SpanElement(y), space)
