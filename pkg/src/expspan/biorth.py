"""The biorthogonal family r_n, distances D_n and exponential bound fits.

At truncation N, r_n = sum_m C[m][n] e_m with C = G^{-1}; then
<r_n, e_m> = delta_nm, ||r_n||^2 = C[n][n] and the distance from e_n to the
span of the other exponentials is D_n = 1 / sqrt(C[n][n]).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from .errors import UsageError
from .numerics import matmul, roundoff_scale, spd_solve, to_scalar, working_precision
from .spaces import SpanElement, TruncatedSpace, build_space, norm


@dataclass(frozen=True)
class BiorthogonalSystem:
    space: TruncatedSpace
    C: tuple  # C[m][n]: coefficient of e_m in r_n (1-based n in the API, 0-based here)
    distances: tuple
    r_norms: tuple
    residual: mpfr  # max |G C - I|

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def bits(self) -> int:
        return self.space.bits

    def r(self, n: int) -> SpanElement:
        """r_n as a span element (1-based)."""
        _check_index(self, n)
        return SpanElement(self.C[m][n - 1] for m in range(self.dim))

    def log_distances(self) -> list:
        """ln D_n = -ln(C_nn)/2, the single source for both bound fits."""
        with working_precision(self.bits):
            return [-gmpy2.log(self.C[i][i]) / 2 for i in range(self.dim)]

    def residual_bound(self) -> mpfr:
        """Allowed max |G C - I| for a backward-stable Cholesky solve."""
        with working_precision(self.bits):
            cmax = max(abs(v) for row in self.C for v in row)
            return roundoff_scale(self.dim, self.bits) * self.space.gram.max_abs() * cmax


def _check_index(bio, n):
    if not 1 <= n <= bio.dim:
        raise UsageError(f"index {n} outside 1..{bio.dim}")


def compute_biorthogonal(space: TruncatedSpace) -> BiorthogonalSystem:
    """Solve G C = I column by column on the cached factor and derive D_n, ||r_n||."""
    n = space.dim
    with working_precision(space.bits):
        cols = []
        for k in range(n):
            e = [mpfr(0)] * n
            e[k] = mpfr(1)
            cols.append(spd_solve(space.gram, e, factor=space.gram_factor))
        C = [[(cols[j][i] + cols[i][j]) / 2 for j in range(n)] for i in range(n)]
        GC = matmul(space.gram.dense(), C)
        residual = max(abs(GC[i][j] - (1 if i == j else 0)) for i in range(n) for j in range(n))
        r_norms = tuple(gmpy2.sqrt(C[i][i]) for i in range(n))
        distances = tuple(1 / v for v in r_norms)
    return BiorthogonalSystem(space, tuple(tuple(r) for r in C), distances, r_norms, residual)


def distance(bio: BiorthogonalSystem, n: int) -> mpfr:
    """D_n: distance from e_n to the span of the other exponentials of the truncation."""
    _check_index(bio, n)
    return bio.distances[n - 1]


def projection_remainder(bio: BiorthogonalSystem, n: int) -> SpanElement:
    """Phi_n = e_n - D_n^2 r_n, the best approximation of e_n from the other exponentials.

    Its n-th coefficient is exactly zero; the others are -C[k][n] / C[n][n].
    """
    _check_index(bio, n)
    i = n - 1
    with working_precision(bio.bits):
        cnn = bio.C[i][i]
        return SpanElement(mpfr(0) if k == i else -bio.C[k][i] / cnn for k in range(bio.dim))


@dataclass(frozen=True)
class BoundFit:
    """Largest (distance) / smallest (norm) constant making an exponential bound hold on the data."""

    kind: str  # "distance": D_n >= m e^{(b-eps) lam}; "norm": ||r_n|| <= m e^{(-b+eps) lam}
    epsilon: mpfr
    fitted_m_epsilon: mpfr
    log_m_epsilon: mpfr
    slope: mpfr
    per_n_margins: tuple


def default_epsilons(space: TruncatedSpace) -> list:
    with working_precision(space.bits):
        length = to_scalar(space.interval.length)
        return [to_scalar(f) * length for f in ("0.05", "0.1", "0.2")]


def _regression_slope(x: Sequence, y: Sequence) -> mpfr:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    return sum((a - mx) * (b - my) for a, b in zip(x, y)) / sum((a - mx) ** 2 for a in x)


def _fit(bio, epsilons, kind):
    if bio.dim < 3:
        raise UsageError("bound fits need at least 3 exponents")
    space = bio.space
    with working_precision(bio.bits):
        _, b = space.interval.endpoints(bio.bits)
        lam = space.lambdas
        log_d = bio.log_distances()
        ys = log_d if kind == "distance" else [-v for v in log_d]
        slope = _regression_slope(lam, ys)
        fits = []
        for eps in epsilons if epsilons is not None else default_epsilons(space):
            eps = to_scalar(eps)
            if kind == "distance":
                gaps = [y - (b - eps) * l for y, l in zip(ys, lam)]
                log_m = min(gaps)
                margins = tuple(g - log_m for g in gaps)
            else:
                gaps = [y - (eps - b) * l for y, l in zip(ys, lam)]
                log_m = max(gaps)
                margins = tuple(log_m - g for g in gaps)
            fits.append(BoundFit(kind, eps, gmpy2.exp(log_m), log_m, slope, margins))
    return fits


def fit_distance_bound(bio: BiorthogonalSystem, epsilons: Sequence | None = None) -> list:
    """Fit D_n >= m_eps e^{(b-eps) lambda_n} with the maximal m_eps for each epsilon."""
    return _fit(bio, epsilons, "distance")


def fit_norm_bound(bio: BiorthogonalSystem, epsilons: Sequence | None = None) -> list:
    """Mirror fit ||r_n|| <= m_eps e^{(-b+eps) lambda_n}: log constants, slope and margins
    are the exact negations (margins identical) of :func:`fit_distance_bound`."""
    return _fit(bio, epsilons, "norm")


def truncation_differences(exponents, interval, cfg, sizes: Sequence[int]) -> list:
    """||r_n^(N+1) - r_n^(N)|| measured in the (N+1)-space, for each N in ``sizes``.

    Reported only; no convergence rate is asserted.
    """
    out = []
    for N in sizes:
        small = compute_biorthogonal(build_space(exponents.truncate(N), interval, cfg))
        big = compute_biorthogonal(build_space(exponents.truncate(N + 1), interval, cfg))
        with working_precision(big.bits):
            diffs = []
            for n in range(1, N + 1):
                padded = SpanElement(list(small.r(n).coeffs) + [0])
                diffs.append(norm(big.r(n) - padded, big.space))
        out.append((N, diffs))
    return out
