"""Per-iteration wall time of the group-kmax solver as the group size grows.

    python3 scripts/iteration_scaling.py --n 200 --m 10 --sizes 10,20,40,80
"""
import argparse

import numpy as np

from grpkmax import GroupedDesign, PenaltySpec, SolveOptions, solve
from grpkmax.experiments import lambda_max


def per_iteration(n, m, d_i, iters, repeats, rng):
    design = GroupedDesign.from_matrix(rng.standard_normal((n, m * d_i)), (d_i,) * m, rng.standard_normal(n))
    spec = PenaltySpec("group-kmax", 0.1 * lambda_max(design, PenaltySpec("lasso", 0.0)), k=(d_i // 2,) * m)
    L = float(np.linalg.norm(design.matrix, 2) ** 2)
    solve(design, spec, SolveOptions(max_iters=2, lipschitz=L))
    options = SolveOptions(max_iters=iters, tol=1e-300, lipschitz=L)
    return float(np.median([solve(design, spec, options).time_per_iteration for _ in range(repeats)]))


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--m", type=int, default=10)
    parser.add_argument("--sizes", default="10,20,40,80")
    parser.add_argument("--iters", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    previous = None
    print(f"{'d':>6} {'us/iter':>9} {'ratio':>6}")
    for d_i in (int(v) for v in args.sizes.split(",")):
        t = per_iteration(args.n, args.m, d_i, args.iters, args.repeats, rng)
        ratio = f"{t / previous:6.2f}" if previous else ""
        print(f"{args.m * d_i:>6} {t * 1e6:9.1f} {ratio}")
        previous = t
