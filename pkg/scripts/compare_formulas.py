"""Exact coefficients against the asymptotic formulas on a grid of n.

    python scripts/compare_formulas.py --lam 0.5 --n 200 400 800
    python scripts/compare_formulas.py --n 200 400 800          # univariate g_n
"""

import argparse

from expansive.asym import N_at, compare_gn, compare_point
from expansive.model import ExpansiveSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--alpha", default="1")
    ap.add_argument("--rho", default="0.5")
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--lam", type=float, default=None)
    ap.add_argument("--n", type=int, nargs="+", default=[200, 400, 800])
    args = ap.parse_args()

    spec = ExpansiveSpec(args.alpha, args.rho, m=args.m)
    for n in args.n:
        if args.lam is None:
            r = compare_gn(spec, n)
            print(f"n={n:6d}  {r['formula']:>10}  ratio={r['ratio']:.6f}")
            continue
        for r in compare_point(spec, n, N_at(spec, n, args.lam), enforce_regime=False):
            print(f"n={n:6d} N={r['N']:5d} {r['regime']:>7} {r['formula']:>11}  ratio={r['ratio']:.6f}")


if __name__ == "__main__":
    main()
