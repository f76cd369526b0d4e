"""sigma_min of the alternating mixed system (even indices kept as exponentials) versus N."""

import argparse

from expspan import Interval, PrecisionConfig, squares_family
from expspan.hereditary import sigma_trend
from expspan.numerics import to_decimal


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-n", type=int, default=14)
    ap.add_argument("--bits", type=int, default=512)
    args = ap.parse_args()

    sizes = range(2, args.max_n + 1)
    trend = sigma_trend(squares_family(args.max_n), Interval(0, 1), PrecisionConfig(args.bits), sizes)
    print(f"{'N':>3} {'sigma_min':>12}")
    for N, s in trend:
        print(f"{N:>3} {to_decimal(s, 4):>12}")


if __name__ == "__main__":
    main()
