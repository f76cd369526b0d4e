"""Slope of ln D_n against lambda_n for growing N and two precisions."""

import argparse

from expspan import Interval, PrecisionConfig, build_space, compute_biorthogonal, fit_distance_bound, squares_family
from expspan.numerics import to_decimal


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 6, 8, 10, 12])
    ap.add_argument("--bits", type=int, nargs="+", default=[512, 1024])
    args = ap.parse_args()

    print(f"{'N':>3} " + " ".join(f"{'slope@' + str(b):>16}" for b in args.bits) + f" {'min D_n':>12}")
    for N in args.sizes:
        slopes, dmin = [], None
        for bits in args.bits:
            sp = build_space(squares_family(N), Interval(0, 1), PrecisionConfig(bits))
            bio = compute_biorthogonal(sp)
            slopes.append(to_decimal(fit_distance_bound(bio)[0].slope, 10) if N >= 3 else "n/a")
            dmin = min(bio.distances)
        print(f"{N:>3} " + " ".join(f"{s:>16}" for s in slopes) + f" {to_decimal(dmin, 4):>12}")


if __name__ == "__main__":
    main()
