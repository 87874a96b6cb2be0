"""Sample the Poisson-cycle construction and test it against the exact joint law.

    python scripts/boltzmann_check.py --x0 0.25 --y0 0.5 --draws 1000000
"""

import argparse
import math

from expansive.boltz import RngState, chi_square_test, exact_joint_law, expected_size_count, params_at, sample_many
from expansive.model import ExpansiveSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--alpha", default="1")
    ap.add_argument("--rho", default="0.5")
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--x0", type=float, default=0.25)
    ap.add_argument("--y0", type=float, default=0.5)
    ap.add_argument("--draws", type=int, default=10**6)
    ap.add_argument("--support", type=int, default=15)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    spec = ExpansiveSpec(args.alpha, args.rho, m=args.m)
    params = params_at(spec, args.x0, args.y0)
    sizes, counts = sample_many(params, spec, args.draws, RngState(args.seed), args.threads)
    law = exact_joint_law(spec, args.x0, args.y0, args.support, args.support)
    res = chi_square_test(sizes, counts, law)
    e_size, e_count = expected_size_count(spec, params)
    root = math.sqrt(len(sizes))
    print(f"j_max={params.j_max} tail<={params.tail_mass:.2e}")
    print(f"chi-square {res.statistic:.2f} on {res.cells} cells, p = {res.p_value:.4f}")
    print(f"E[size]  {sizes.mean():.5f} vs {e_size:.5f} (z = {(sizes.mean() - e_size) / (sizes.std() / root):+.2f})")
    print(f"E[count] {counts.mean():.5f} vs {e_count:.5f} (z = {(counts.mean() - e_count) / (counts.std() / root):+.2f})")


if __name__ == "__main__":
    main()
