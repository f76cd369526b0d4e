"""Multiprecision scalars, Gauss-Legendre quadrature and small dense SPD linear algebra.

Everything here computes at the *ambient* gmpy2 context precision except
:func:`quadrature_integrate`, which takes its precision from a
:class:`PrecisionConfig`.  Callers that own a precision (spaces, operators)
wrap their work in :func:`working_precision`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import NotPositiveDefiniteError, QuadratureError

Scalar = mpfr
ComplexScalar = mpc
Matrix = list  # list of rows, each a list of mpfr/mpc

MAX_QUADRATURE_ORDER = 4096
_FIRST_QUADRATURE_ORDER = 16


@dataclass(frozen=True)
class PrecisionConfig:
    mantissa_bits: int = 512
    escalation_limit: int = 4096

    def __post_init__(self):
        if int(self.mantissa_bits) != self.mantissa_bits or self.mantissa_bits < 128:
            raise ValueError(f"mantissa_bits must be an integer >= 128, got {self.mantissa_bits}")
        if self.escalation_limit < self.mantissa_bits:
            raise ValueError("escalation_limit must be >= mantissa_bits")

    def doubled(self) -> PrecisionConfig:
        return PrecisionConfig(2 * self.mantissa_bits, self.escalation_limit)

    @property
    def half_tolerance(self) -> mpfr:
        return half_tolerance(self.mantissa_bits)


def working_precision(bits: int):
    """Context manager setting the gmpy2 working precision to ``bits``."""
    return gmpy2.context(gmpy2.get_context(), precision=int(bits))


def current_bits() -> int:
    return gmpy2.get_context().precision


def half_tolerance(bits: int) -> mpfr:
    """2^(-bits/2): the relative agreement demanded of converged quantities."""
    return mpfr(2) ** (-(bits // 2))


def roundoff_scale(n: int, bits: int) -> mpfr:
    """n^2 * 2^(-bits+8): the backward-error scale used for factor and solve residuals."""
    return mpfr(n * n) * mpfr(2) ** (8 - bits)


def to_scalar(x) -> mpfr:
    """Convert a decimal string, int, Fraction or float to an mpfr at ambient precision."""
    if isinstance(x, mpfr):
        return x
    if isinstance(x, Fraction):
        return mpfr(x.numerator) / mpfr(x.denominator)
    if isinstance(x, str):
        return mpfr(x.strip())
    return mpfr(x)


def to_complex(x) -> mpc:
    """Convert to mpc; existing mpfr/mpc values keep their own precision."""
    if isinstance(x, mpc):
        return x
    if isinstance(x, mpfr):
        return mpc(x, precision=max(x.precision, current_bits()))
    if isinstance(x, complex):
        return mpc(x.real, x.imag)
    return mpc(to_scalar(x), 0)


def to_decimal(x, digits: int = 40) -> str:
    """Render an mpfr (or anything mpfr accepts) in scientific notation with ``digits`` significant digits."""
    x = to_scalar(x)
    if gmpy2.is_nan(x):
        return "nan"
    if gmpy2.is_infinite(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0." + "0" * (digits - 1) + "e+00"
    mant, exp10, _ = gmpy2.digits(x, 10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    e = exp10 - 1
    return f"{sign}{mant[0]}.{mant[1:]}e{'+' if e >= 0 else '-'}{abs(e):02d}"


def complex_to_decimal(z, digits: int = 40) -> str:
    z = to_complex(z)
    if z.imag == 0:
        return to_decimal(z.real, digits)
    im = to_decimal(z.imag, digits)
    if not im.startswith("-"):
        im = "+" + im
    return f"{to_decimal(z.real, digits)}{im}j"


# ---------------------------------------------------------------------------
# Gauss-Legendre quadrature
# ---------------------------------------------------------------------------


def _legendre_with_derivative(n: int, x):
    p0, p1 = 1, x
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp


@lru_cache(maxsize=64)
def gauss_legendre(order: int, bits: int) -> tuple[tuple[mpfr, mpfr], ...]:
    """Non-negative nodes and weights of the ``order``-point rule on [-1, 1].

    Only even orders are supported; node ``x`` stands for the pair ``±x``.
    """
    if order % 2:
        raise ValueError("gauss_legendre supports even orders only")
    m = order // 2
    k = np.arange(1, m + 1)
    x = np.cos(np.pi * (k - 0.25) / (order + 0.5))
    for _ in range(100):
        p, dp = _legendre_with_derivative(order, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    rules = []
    for x0 in x:
        xi = None
        prec = 64
        while True:
            prec = min(2 * prec, bits + 32)
            with working_precision(prec):
                xi = mpfr(float(x0)) if xi is None else mpfr(xi)
                p, dp = _legendre_with_derivative(order, xi)
                xi = xi - p / dp
            if prec == bits + 32:
                break
        with working_precision(bits + 32):
            p, dp = _legendre_with_derivative(order, xi)
            xi = xi - p / dp
            p, dp = _legendre_with_derivative(order, xi)
            w = 2 / ((1 - xi * xi) * dp * dp)
        with working_precision(bits):
            rules.append((+xi, +w))
    return tuple(rules)


def _gauss_legendre_sum(f, mid, half, rule):
    total = 0
    for x, w in rule:
        d = half * x
        total += w * (f(mid + d) + f(mid - d))
    return half * total


def quadrature_integrate(
    f: Callable,
    interval,
    cfg: PrecisionConfig,
    max_order: int = MAX_QUADRATURE_ORDER,
):
    """Integrate ``f`` over ``interval`` by Gauss-Legendre with order doubling.

    ``interval`` is a pair ``(a, b)`` or any object with an ``endpoints(bits)``
    method.  The order starts at 16 and doubles until two successive values
    agree to 2^(-bits/2) relative; the later value is returned.
    """
    bits = cfg.mantissa_bits
    with working_precision(bits):
        if hasattr(interval, "endpoints"):
            a, b = interval.endpoints(bits)
        else:
            a, b = (to_scalar(v) for v in interval)
        mid = (a + b) / 2
        half = (b - a) / 2
        tol = half_tolerance(bits)
        prev = None
        order = _FIRST_QUADRATURE_ORDER
        while order <= max_order:
            val = _gauss_legendre_sum(f, mid, half, gauss_legendre(order, bits))
            if prev is not None and abs(val - prev) <= tol * abs(val):
                return val
            if prev is not None and val == 0 and prev == 0:
                return val
            prev_prev, prev = prev, val
            order *= 2
        raise QuadratureError(
            f"Gauss-Legendre did not converge by order {max_order}", previous=prev_prev, last=prev
        )


# ---------------------------------------------------------------------------
# Dense symmetric / SPD linear algebra
# ---------------------------------------------------------------------------


class SpdMatrix:
    """Symmetric matrix stored by its lower triangle (row i holds entries 0..i)."""

    __slots__ = ("n", "lower")

    def __init__(self, lower: Sequence[Sequence]):
        self.lower = tuple(tuple(row) for row in lower)
        self.n = len(self.lower)
        for i, row in enumerate(self.lower):
            if len(row) != i + 1:
                raise ValueError("lower-triangle row lengths must be 1, 2, ..., n")

    @classmethod
    def from_function(cls, n: int, entry: Callable[[int, int], object]) -> SpdMatrix:
        return cls([[entry(i, j) for j in range(i + 1)] for i in range(n)])

    @classmethod
    def from_dense(cls, rows: Sequence[Sequence]) -> SpdMatrix:
        """Take the lower triangle of ``rows``; symmetry of the upper part is not checked."""
        return cls([[rows[i][j] for j in range(i + 1)] for i in range(len(rows))])

    def __getitem__(self, ij):
        i, j = ij
        return self.lower[i][j] if j <= i else self.lower[j][i]

    def dense(self) -> Matrix:
        return [[self[i, j] for j in range(self.n)] for i in range(self.n)]

    def max_abs(self):
        return max(abs(v) for row in self.lower for v in row)

    def diagonal(self):
        return [self.lower[i][i] for i in range(self.n)]

    def normalized(self) -> SpdMatrix:
        """Unit-diagonal rescaling M_ij / sqrt(M_ii M_jj)."""
        s = [gmpy2.sqrt(d) for d in self.diagonal()]
        return SpdMatrix([[self.lower[i][j] / (s[i] * s[j]) for j in range(i + 1)] for i in range(self.n)])

    def principal(self, idx: Sequence[int]) -> SpdMatrix:
        return SpdMatrix([[self[i, j] for j in idx[: k + 1]] for k, i in enumerate(idx)])

    def __len__(self):
        return self.n


def cholesky_spd(M: SpdMatrix, pivot_floor=0) -> Matrix:
    """Lower factor L with L L^T = M.

    Raises NotPositiveDefiniteError when a pivot is <= ``pivot_floor * M_jj``
    (with the default floor of 0, exactly when it is non-positive).
    """
    n = M.n
    L = [[mpfr(0)] * n for _ in range(n)]
    for j in range(n):
        Lj = L[j]
        s = M[j, j] - gmpy2.fsum([Lj[k] * Lj[k] for k in range(j)]) if j else M[j, j]
        if not s > pivot_floor * M[j, j]:
            raise NotPositiveDefiniteError(j, s)
        d = gmpy2.sqrt(s)
        Lj[j] = d
        for i in range(j + 1, n):
            Li = L[i]
            s = M[i, j] - gmpy2.fsum([Li[k] * Lj[k] for k in range(j)]) if j else M[i, j]
            Li[j] = s / d
    return L


def factor_residual(M: SpdMatrix, L: Matrix):
    """max |L L^T - M| over the lower triangle."""
    n = M.n
    worst = mpfr(0)
    for i in range(n):
        for j in range(i + 1):
            r = abs(gmpy2.fsum([L[i][k] * L[j][k] for k in range(j + 1)]) - M[i, j])
            if r > worst:
                worst = r
    return worst


def forward_substitute(L: Matrix, rhs: Sequence) -> list:
    """Solve L y = rhs for lower-triangular L (rhs may be complex)."""
    n = len(L)
    y = [None] * n
    for i in range(n):
        Li = L[i]
        s = rhs[i]
        for k in range(i):
            s -= Li[k] * y[k]
        y[i] = s / Li[i]
    return y


def back_substitute(L: Matrix, rhs: Sequence) -> list:
    """Solve L^T x = rhs given the lower factor L."""
    n = len(L)
    x = [None] * n
    for i in range(n - 1, -1, -1):
        s = rhs[i]
        for k in range(i + 1, n):
            s -= L[k][i] * x[k]
        x[i] = s / L[i][i]
    return x


def spd_solve(M: SpdMatrix, rhs: Sequence, factor: Matrix | None = None) -> list:
    """Solve M x = rhs through the Cholesky factor (computed if not supplied)."""
    if len(rhs) != M.n:
        raise ValueError(f"rhs has length {len(rhs)}, matrix is {M.n}x{M.n}")
    L = cholesky_spd(M) if factor is None else factor
    return back_substitute(L, forward_substitute(L, rhs))


def symmetric_matvec(M: SpdMatrix, x: Sequence) -> list:
    n = M.n
    return [sum((M[i, j] * x[j] for j in range(n)), mpfr(0)) for i in range(n)]


def lower_inverse(L: Matrix) -> Matrix:
    """Inverse of a lower-triangular matrix, column by column."""
    n = len(L)
    cols = []
    for j in range(n):
        e = [mpfr(0)] * n
        e[j] = mpfr(1)
        cols.append(forward_substitute(L, e))
    return [[cols[j][i] for j in range(n)] for i in range(n)]


def matmul(A: Matrix, B: Matrix) -> Matrix:
    inner = range(len(B))
    cols = range(len(B[0]))
    return [[sum((row[k] * B[k][j] for k in inner), mpfr(0)) for j in cols] for row in A]


def conj_transpose(A: Matrix) -> Matrix:
    return [[_conj(A[i][j]) for i in range(len(A))] for j in range(len(A[0]))]


def _conj(v):
    return v.conjugate() if isinstance(v, mpc) else v


def symmetric_eigenvalues(M, max_sweeps: int = 60) -> list:
    """All eigenvalues of a real symmetric matrix by cyclic Jacobi, ascending.

    A rotation is skipped once |a_pq| <= 2^-bits * sqrt(|a_pp a_qq|) (or is
    negligible against the Frobenius norm); iteration stops after a sweep with
    no rotations.  This is tighter than an off-diagonal Frobenius mass of
    2^(-bits/2) ||M|| and keeps tiny eigenvalues of graded SPD matrices accurate.
    """
    A = [list(row) for row in (M.dense() if isinstance(M, SpdMatrix) else M)]
    n = len(A)
    if n == 0:
        return []
    bits = current_bits()
    eps = mpfr(2) ** (-bits)
    fro = gmpy2.sqrt(gmpy2.fsum([v * v for row in A for v in row]))
    floor = eps * eps * fro
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p][q]
                if apq == 0:
                    continue
                app, aqq = A[p][p], A[q][q]
                if abs(apq) <= eps * gmpy2.sqrt(abs(app * aqq)) or abs(apq) <= floor:
                    continue
                rotated = True
                theta = (aqq - app) / (2 * apq)
                t = 1 / (abs(theta) + gmpy2.sqrt(theta * theta + 1))
                if theta < 0:
                    t = -t
                c = 1 / gmpy2.sqrt(t * t + 1)
                s = t * c
                A[p][p] = app - t * apq
                A[q][q] = aqq + t * apq
                A[p][q] = A[q][p] = mpfr(0)
                for r in range(n):
                    if r == p or r == q:
                        continue
                    arp, arq = A[r][p], A[r][q]
                    A[r][p] = A[p][r] = c * arp - s * arq
                    A[r][q] = A[q][r] = s * arp + c * arq
        if not rotated:
            return sorted(A[i][i] for i in range(n))
    raise ArithmeticError(f"Jacobi did not converge in {max_sweeps} sweeps")


def hermitian_eigenvalues(H: Matrix) -> list:
    """Eigenvalues of a complex Hermitian matrix via its real symmetric 2n embedding.

    [[X, -Y], [Y, X]] carries each eigenvalue of X + iY twice; one copy of each
    pair is returned, ascending.
    """
    n = len(H)
    if not any(isinstance(v, mpc) and v.imag != 0 for row in H for v in row):
        return symmetric_eigenvalues([[mpfr(v.real) if isinstance(v, mpc) else v for v in row] for row in H])
    X = [[to_complex(v).real for v in row] for row in H]
    Y = [[to_complex(v).imag for v in row] for row in H]
    big = [X[i] + [-y for y in Y[i]] for i in range(n)] + [Y[i] + X[i] for i in range(n)]
    # enforce exact symmetry of the embedding
    for i in range(2 * n):
        for j in range(i):
            big[i][j] = big[j][i] = (big[i][j] + big[j][i]) / 2
    ev = symmetric_eigenvalues(big)
    return ev[::2]


def min_singular_value(M) -> mpfr:
    """Smallest eigenvalue magnitude of a symmetric matrix (smallest singular value for SPD input)."""
    return min(abs(v) for v in symmetric_eigenvalues(M))


def spectral_norm_hermitian(H: Matrix) -> mpfr:
    return max(abs(v) for v in hermitian_eigenvalues(H))

