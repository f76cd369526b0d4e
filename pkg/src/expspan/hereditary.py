"""Mixed systems {e_n : n in N1} u {r_n : n in N2} and their completeness in the truncated span.

Partitions are bitmasks: bit k (0-based) set means index k+1 belongs to N1
(kept as an exponential); cleared means it is replaced by r_{k+1}.
"""

from __future__ import annotations

import csv
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from .biorth import BiorthogonalSystem, compute_biorthogonal
from .errors import InternalConsistencyError, NotPositiveDefiniteError, UsageError
from .numerics import (
    SpdMatrix,
    cholesky_spd,
    matmul,
    roundoff_scale,
    symmetric_eigenvalues,
    to_decimal,
    working_precision,
)
from .spaces import build_space

EXHAUSTIVE_LIMIT = 14


@dataclass(frozen=True)
class Partition:
    n: int
    mask: int

    def __post_init__(self):
        if not 0 <= self.mask < (1 << self.n):
            raise UsageError(f"mask {self.mask} does not fit {self.n} indices")

    @classmethod
    def from_sets(cls, n1: Sequence[int], n2: Sequence[int], n: int) -> Partition:
        s1, s2 = set(n1), set(n2)
        if s1 & s2:
            raise UsageError(f"N1 and N2 overlap on {sorted(s1 & s2)}")
        if s1 | s2 != set(range(1, n + 1)):
            raise UsageError(f"N1 and N2 must cover 1..{n}")
        return cls(n, sum(1 << (k - 1) for k in s1))

    @property
    def n1(self) -> tuple:
        return tuple(k + 1 for k in range(self.n) if self.mask >> k & 1)

    @property
    def n2(self) -> tuple:
        return tuple(k + 1 for k in range(self.n) if not self.mask >> k & 1)

    def dual(self) -> Partition:
        return Partition(self.n, ~self.mask & ((1 << self.n) - 1))

    def bits(self) -> str:
        """Bitmask as a string, index 1 rightmost."""
        return format(self.mask, f"0{self.n}b")


@dataclass(frozen=True)
class MixedSystemReport:
    partition: Partition
    mixed_gram: SpdMatrix
    sigma_min: mpfr
    complete: bool
    cholesky_ok: bool
    null_dimension: int
    undecided: bool
    cross_residual: mpfr  # max |<e_n, r_m> - delta_nm| over the assembled cross block


def cross_products(bio: BiorthogonalSystem) -> list:
    """<e_n, r_m> = (G C)_{nm}, computed rather than assumed."""
    with working_precision(bio.bits):
        return matmul(bio.space.gram.dense(), [list(r) for r in bio.C])


def mixed_gram(space, bio: BiorthogonalSystem, partition: Partition, cross=None) -> SpdMatrix:
    """Gram matrix of the mixed system, N1 block (ascending) first, then N2."""
    if partition.n != space.dim:
        raise UsageError("partition size does not match the space")
    cross = cross_products(bio) if cross is None else cross
    members = [("e", k - 1) for k in partition.n1] + [("r", k - 1) for k in partition.n2]
    G, C = space.gram, bio.C

    def entry(i, j):
        (ki, a), (kj, b) = members[i], members[j]
        if ki == "e" and kj == "e":
            return G[a, b]
        if ki == "r" and kj == "r":
            return C[a][b]
        return cross[a][b] if ki == "e" else cross[b][a]

    return SpdMatrix.from_function(len(members), entry)


def _constraint_rank(space, bio, partition, cross) -> int:
    """Rank of the conditions <x, e_n> = 0 (n in N1), <x, r_m> = 0 (m in N2) on coefficient vectors x.

    Full-pivot elimination on the row-equilibrated, column-normalized system;
    pivots at roundoff level count as zero.
    """
    n = space.dim
    G = space.gram
    scale = [gmpy2.sqrt(G[k, k]) for k in range(n)]
    rows = []
    for k in partition.n1:
        rows.append([G[j, k - 1] / scale[j] for j in range(n)])
    for k in partition.n2:
        rows.append([cross[j][k - 1] / scale[j] for j in range(n)])
    rows = [[v / max(abs(x) for x in row) for v in row] for row in rows]
    tol = roundoff_scale(n, space.bits)
    rank = 0
    active_rows = list(range(n))
    active_cols = list(range(n))
    while active_rows:
        p, q = max(((i, j) for i in active_rows for j in active_cols), key=lambda ij: abs(rows[ij[0]][ij[1]]))
        piv = rows[p][q]
        if abs(piv) <= tol:
            break
        rank += 1
        active_rows.remove(p)
        active_cols.remove(q)
        for i in active_rows:
            f = rows[i][q] / piv
            if f:
                for j in active_cols:
                    rows[i][j] -= f * rows[p][j]
    return rank


def completeness_metric(space, bio: BiorthogonalSystem, partition: Partition, cross=None) -> MixedSystemReport:
    """Certify completeness of the mixed system two ways and measure its smallest normalized eigenvalue."""
    cross = cross_products(bio) if cross is None else cross
    with working_precision(space.bits):
        M = mixed_gram(space, bio, partition, cross)
        try:
            cholesky_spd(M)
            cholesky_ok = True
        except NotPositiveDefiniteError:
            cholesky_ok = False
        null_dim = space.dim - _constraint_rank(space, bio, partition, cross)
        if cholesky_ok != (null_dim == 0):
            raise InternalConsistencyError(
                f"partition {partition.bits()}: Cholesky {'succeeded' if cholesky_ok else 'failed'} "
                f"but the null-space test found dimension {null_dim}"
            )
        sigma = min(symmetric_eigenvalues(M.normalized()))
        undecided = sigma <= roundoff_scale(space.dim, space.bits)
        worst = mpfr(0)
        for a in partition.n1:
            for b in partition.n2:
                worst = max(worst, abs(cross[a - 1][b - 1]))
    return MixedSystemReport(
        partition=partition,
        mixed_gram=M,
        sigma_min=sigma,
        complete=cholesky_ok and null_dim == 0 and not undecided,
        cholesky_ok=cholesky_ok,
        null_dimension=null_dim,
        undecided=bool(undecided),
        cross_residual=worst,
    )


@dataclass(frozen=True)
class SweepResult:
    reports: tuple
    min_sigma: mpfr
    median_sigma: mpfr
    argmin: Partition

    @property
    def all_complete(self) -> bool:
        return all(r.complete for r in self.reports)


def _sweep_chunk(args):
    space, bio, masks = args
    cross = cross_products(bio)
    return [completeness_metric(space, bio, Partition(space.dim, m), cross) for m in masks]


def sweep_partitions(
    space,
    bio: BiorthogonalSystem,
    mode: str = "exhaustive",
    count: int | None = None,
    seed: int | None = None,
    workers: int = 1,
) -> SweepResult:
    """Run :func:`completeness_metric` over all partitions or a seeded random sample.

    Reports come back in ascending mask order regardless of ``workers``.
    """
    n = space.dim
    if mode == "exhaustive":
        if n > EXHAUSTIVE_LIMIT:
            raise UsageError(f"exhaustive sweep limited to N <= {EXHAUSTIVE_LIMIT}, got {n}")
        masks = list(range(1 << n))
    elif mode == "sample":
        if count is None or seed is None:
            raise UsageError("sample mode needs count and seed")
        masks = sorted(random.Random(seed).sample(range(1 << n), min(count, 1 << n)))
    else:
        raise UsageError(f"unknown sweep mode {mode!r}")

    if workers > 1 and len(masks) > 1:
        chunks = [masks[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_sweep_chunk, [(space, bio, c) for c in chunks])
            reports = sorted((r for part in parts for r in part), key=lambda r: r.partition.mask)
    else:
        reports = _sweep_chunk((space, bio, masks))

    sigmas = [r.sigma_min for r in reports]
    with working_precision(space.bits):
        worst = min(reports, key=lambda r: r.sigma_min)
        median = statistics.median_low(sigmas) if len(sigmas) % 2 else (
            (sorted(sigmas)[len(sigmas) // 2 - 1] + sorted(sigmas)[len(sigmas) // 2]) / 2
        )
    return SweepResult(tuple(reports), worst.sigma_min, median, worst.partition)


def write_partitions_csv(result: SweepResult, path, digits: int = 40) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bitmask", "sigma_min", "complete"])
        for r in result.reports:
            w.writerow([r.partition.bits(), to_decimal(r.sigma_min, digits), str(r.complete).lower()])


def alternating_partition(n: int) -> Partition:
    """Even indices in N1, odd indices in N2."""
    return Partition.from_sets(range(2, n + 1, 2), range(1, n + 1, 2), n)


def sigma_trend(exponents, interval, cfg, sizes: Sequence[int], pattern=alternating_partition) -> list:
    """sigma_min of a fixed partition pattern for each truncation size (reported, not bounded)."""
    out = []
    for N in sizes:
        space = build_space(exponents.truncate(N), interval, cfg)
        bio = compute_biorthogonal(space)
        out.append((N, completeness_metric(space, bio, pattern(N)).sigma_min))
    return out
