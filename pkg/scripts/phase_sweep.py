"""Saddle data and the two regime formulas across lambda = N / N*_n at fixed n.

    python scripts/phase_sweep.py --n 800 --lambdas 0.3 0.5 2 4
"""

import argparse
import math

from expansive.asym import N_at, estimate
from expansive.errors import DomainError
from expansive.model import ExpansiveSpec, sv_from_dict
from expansive.saddle import chi_asymptotic_check, classify, solve_bivariate
from expansive.series import float_table


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--alpha", default="1")
    ap.add_argument("--rho", default="0.5")
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--log-power", default=None, help="use h(x) = log(x)^beta")
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.3, 0.5, 2.0, 4.0])
    ap.add_argument("--exact-guard", type=int, default=2000)
    args = ap.parse_args()

    h = sv_from_dict({"kind": "log_power", "params": {"beta": args.log_power}}) if args.log_power else None
    spec = ExpansiveSpec(args.alpha, args.rho, h, args.m) if h else ExpansiveSpec(args.alpha, args.rho, m=args.m)
    points = [(lam, N_at(spec, args.n, lam)) for lam in args.lambdas if classify(lam) != "Window"]
    points = [(lam, N) for lam, N in points if N >= 1 and args.n - spec.m * N >= 1]
    table = float_table(spec, args.n, max(N for _, N in points)) if args.n <= args.exact_guard else None

    print(f"{'lambda':>7} {'N':>6} {'regime':>7} {'y rho^m':>9} {'S/N':>9} {'LLT_I/exact':>12} {'LLT_II/exact':>13}")
    for lam, N in points:
        sol = solve_bivariate(spec, args.n, N)
        chk = chi_asymptotic_check(spec, sol)
        ratios = []
        for form in ("LLT_I", "LLT_II"):
            try:
                val = estimate(spec, sol, form, enforce_regime=False).log_value
                ratios.append(math.exp(val - table.log_value(args.n, N)) if table else math.nan)
            except DomainError:
                ratios.append(math.inf)
        print(f"{lam:7.2f} {N:6d} {sol.regime:>7} {chk['y_rho_m']:9.4f} {chk['S_over_N']:9.4f}"
              f" {ratios[0]:12.5f} {ratios[1]:13.5f}")


if __name__ == "__main__":
    main()
