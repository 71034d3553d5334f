"""Time-discretization and sample-size study on linear-drift.

Fixes a fine ensemble and observes the same paths on coarser grids, so the
change in error between rows is mostly time-discretization error.

    python scripts/convergence_study.py --rho 1 --M 16384
"""

import argparse

import numpy as np

from bdsvie.calculus import relative_l2_error
from bdsvie.certificate import build_certificate
from bdsvie.grid import make_grid, sample_ensemble
from bdsvie.problems import catalog_problem
from bdsvie.solver import stitched_solve


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rho", type=float, default=1.0)
    parser.add_argument("--M", type=int, default=16384)
    parser.add_argument("--N-max", dest="n_max", type=int, default=64)
    parser.add_argument("--levels", type=int, default=3)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    entry = catalog_problem("linear-drift", rho=args.rho)
    spec = entry.spec
    fine = sample_ensemble(make_grid(spec.T, args.n_max), args.M, seed=args.seed)
    print(f"{'N':>4} {'Y err':>8} {'Z err':>8} {'slope err':>10} {'iters':>6}")
    for level in reversed(range(args.levels)):
        ens = fine.subsample(2 ** level)
        cert = build_certificate(spec.C, spec.alpha, spec.T, grid_steps=ens.grid.n_steps)
        sol = stitched_solve(spec, ens, cert)
        y_ref, z_ref = entry.oracle(ens)
        j = ens.grid.n_steps // 2
        w, y = ens.w[:, j, 0], sol.y.values[j, :, 0]
        slope = abs(y @ w / (w @ w) - np.exp(-args.rho * (spec.T - ens.grid.times[j])))
        print(f"{ens.grid.n_steps:>4} {relative_l2_error(sol.y, y_ref):>8.4f} "
              f"{relative_l2_error(sol.z, z_ref):>8.4f} {slope:>10.2e} {sol.iterations_used:>6}")


if __name__ == "__main__":
    main()
