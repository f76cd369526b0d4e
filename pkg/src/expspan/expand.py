"""Dirichlet expansion coefficients c_n = <f, r_n> and their L2 residual.

Span elements are analysed in coefficient algebra; external functions through
Gauss-Legendre moments integral f(t) e^{lambda_m t} dt.  At truncation the
expansion of an external function is its orthogonal projection onto the span.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

import gmpy2
from gmpy2 import mpc, mpfr

from .biorth import BiorthogonalSystem
from .errors import DimensionMismatchError, InternalConsistencyError, UsageError
from .numerics import PrecisionConfig, half_tolerance, quadrature_integrate, to_complex, to_scalar, working_precision
from .spaces import SpanElement, TruncatedSpace, exact, gram_apply, inner_product


@dataclass(frozen=True)
class Monomial:
    power: int

    def __call__(self, t):
        return t**self.power

    @property
    def name(self) -> str:
        return f"t^{self.power}"


@dataclass(frozen=True)
class Exponential:
    rate: Fraction

    def __call__(self, t):
        return gmpy2.exp(to_scalar(self.rate) * t)

    @property
    def name(self) -> str:
        return f"exp({self.rate}t)"


_MONOMIAL = re.compile(r"^t\^(\d+)$")
_EXPONENTIAL = re.compile(r"^exp\(\s*([-+]?[0-9.]+(?:[eE][-+]?\d+)?)\s*\*?\s*t\s*\)$")


def builtin_function(name: str):
    """Parse ``"t^k"`` or ``"exp(mu t)"`` / ``"exp(mu*t)"`` into a callable."""
    s = name.strip()
    if m := _MONOMIAL.match(s):
        return Monomial(int(m.group(1)))
    if m := _EXPONENTIAL.match(s):
        return Exponential(exact(m.group(1)))
    raise UsageError(f"unknown built-in function {name!r}; expected 't^k' or 'exp(mu*t)'")


External = Callable
Source = Union[SpanElement, External]


@dataclass(frozen=True)
class ExpansionResult:
    coeffs: tuple
    residual_norm: mpfr
    source: str  # "span-element" | "external-function"

    def synthesis(self) -> SpanElement:
        """The truncated series sum c_n e_n; evaluate it with :func:`expspan.spaces.evaluate`."""
        return SpanElement(self.coeffs)


@dataclass(frozen=True)
class _Moments:
    """<f, e_m> for all m and ||f||^2, by quadrature."""

    inner: tuple
    norm_sq: mpfr


def _external_moments(f: External, space: TruncatedSpace, cfg: PrecisionConfig) -> _Moments:
    inner = []
    with working_precision(cfg.mantissa_bits):
        for lam in space.lambdas:
            inner.append(to_complex(quadrature_integrate(lambda t, lam=lam: f(t) * gmpy2.exp(lam * t), space.interval, cfg)))
        norm_sq = quadrature_integrate(lambda t: abs(f(t)) ** 2, space.interval, cfg)
    return _Moments(tuple(inner), norm_sq)


def _check_bio(space, bio):
    if bio.dim != space.dim:
        raise DimensionMismatchError("biorthogonal system belongs to another space")


def analyze(f: Source, space: TruncatedSpace, bio: BiorthogonalSystem, cfg: PrecisionConfig | None = None) -> ExpansionResult:
    """Expansion coefficients <f, r_n> plus the L2 norm of what the truncated series misses."""
    _check_bio(space, bio)
    cfg = cfg or space.cfg
    n = space.dim
    with working_precision(space.bits):
        if isinstance(f, SpanElement):
            space.check_dim(f)
            moments = gram_apply(space, f.coeffs)  # <f, e_m> = (G f)_m
            source = "span-element"
            extra = None
        else:
            extra = _external_moments(f, space, cfg)
            moments = list(extra.inner)
            source = "external-function"
        coeffs = tuple(sum((moments[m] * bio.C[m][k] for m in range(n)), mpc(0)) for k in range(n))
    res = _residual(f, coeffs, space, cfg, extra)
    return ExpansionResult(coeffs, res, source)


def residual_norm(f: Source, coeffs, space: TruncatedSpace, cfg: PrecisionConfig | None = None) -> mpfr:
    """||f - sum c_n e_n|| over (a, b) from <f,f> - 2 Re <f, p> + <p, p>.

    A negative radicand whose magnitude is within 2^(-bits/2) of the term
    magnitudes is roundoff and clamps to 0; anything larger raises.
    """
    if len(coeffs) != space.dim:
        raise DimensionMismatchError(f"{len(coeffs)} coefficients for a {space.dim}-dimensional space")
    cfg = cfg or space.cfg
    extra = None if isinstance(f, SpanElement) else _external_moments(f, space, cfg)
    return _residual(f, tuple(to_complex(c) for c in coeffs), space, cfg, extra)


def _residual(f, coeffs, space, cfg, extra):
    p = SpanElement(coeffs)
    with working_precision(space.bits):
        pp = inner_product(p, p, space).real
        if extra is None:
            space.check_dim(f)
            ff = inner_product(f, f, space).real
            fp = inner_product(f, p, space)
        else:
            ff = extra.norm_sq
            fp = sum((m * c.conjugate() for m, c in zip(extra.inner, coeffs)), mpc(0))
        radicand = ff - 2 * fp.real + pp
        scale = abs(ff) + 2 * abs(fp) + abs(pp)
        return clamp_sqrt(radicand, half_tolerance(space.bits) * scale)


def clamp_sqrt(radicand, bound) -> mpfr:
    """sqrt of a radicand that may be slightly negative through cancellation."""
    if radicand >= 0:
        return gmpy2.sqrt(radicand)
    if -radicand <= bound:
        return mpfr(0)
    raise InternalConsistencyError(f"residual radicand {float(radicand):.3e} is negative beyond roundoff ({float(bound):.3e})")
