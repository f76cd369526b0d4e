"""||T - T_m|| against its analytic bound for the shift weights on lambda_n = n^2.

The computed column is not monotone in m: T - T_m is an oblique, not an
orthogonal, truncation of a non-normal operator.
"""

import argparse

from expspan import DiagonalOperator, Interval, PrecisionConfig, build_space, compute_biorthogonal, make_weights, squares_family, tail_norm
from expspan.numerics import to_decimal


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--delta", default="0.5")
    ap.add_argument("--bits", type=int, default=512)
    args = ap.parse_args()

    sp = build_space(squares_family(args.n), Interval(0, 1), PrecisionConfig(args.bits))
    op = DiagonalOperator(sp, compute_biorthogonal(sp), make_weights(args.delta, sp.exponents, bits=args.bits))
    print(f"{'m':>3} {'computed':>12} {'bound':>12} {'ratio':>10} {'eps':>8}")
    for m in range(args.n + 1):
        t = tail_norm(op, m)
        eps = to_decimal(t.epsilon, 3) if t.epsilon is not None else "-"
        print(f"{m:>3} {to_decimal(t.computed, 4):>12} {to_decimal(t.analytic_bound, 4):>12} {to_decimal(t.ratio, 3):>10} {eps:>8}")


if __name__ == "__main__":
    main()
