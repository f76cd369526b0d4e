"""Multiprecision laboratory for exponential systems e^{lambda_n t} on (a, b).

Finite truncations of the span, the biorthogonal family, Dirichlet
expansions, mixed-system completeness and a compact non-normal diagonal
operator with its spectral checks.
"""

from .biorth import BiorthogonalSystem, compute_biorthogonal, distance, fit_distance_bound, fit_norm_bound, projection_remainder
from .errors import ExpSpanError
from .expand import ExpansionResult, analyze, builtin_function, residual_norm
from .hereditary import Partition, completeness_metric, mixed_gram, sweep_partitions
from .numerics import PrecisionConfig, SpdMatrix, working_precision
from .spaces import (
    ExponentSequence,
    Interval,
    SpanElement,
    TruncatedSpace,
    build_space,
    evaluate,
    geometric_family,
    inner_product,
    norm,
    squares_family,
    validate_exponents,
)
from .synthesis import (
    DiagonalOperator,
    adjoint_consistency,
    apply_T,
    apply_T_star,
    commutator_norm,
    krylov_synthesis_check,
    make_weights,
    shift_consistency,
    tail_norm,
    verify_eigensystem,
)

__version__ = "0.1.0"
