"""Picard residuals and squared ratios on lipschitz-demo, against the certified factor.

    python scripts/contraction_demo.py --partition 1.0 0.5 0.0
"""

import argparse

from bdsvie.certificate import build_certificate
from bdsvie.grid import make_grid, sample_ensemble
from bdsvie.problems import catalog_problem
from bdsvie.regression import RegressionOperator
from bdsvie.solver import FrozenField, stitched_solve
from bdsvie.verify import geometric_iteration_bound


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--N", type=int, default=32)
    parser.add_argument("--M", type=int, default=8192)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--tol", type=float, default=1e-4)
    parser.add_argument("--partition", type=float, nargs="+", default=None)
    parser.add_argument("--init", choices=("zero", "xi"), default="zero")
    args = parser.parse_args()

    spec = catalog_problem("lipschitz-demo").spec
    ens = sample_ensemble(make_grid(spec.T, args.N), args.M, seed=args.seed)
    cert = build_certificate(spec.C, spec.alpha, spec.T, partition=args.partition, grid_steps=args.N)
    init = FrozenField.zeros(ens, 1) if args.init == "zero" else FrozenField.constant(ens, spec.terminal(ens))
    sol = stitched_solve(spec, ens, cert, args.tol, 50, init, RegressionOperator(ens))

    print(f"Lambda = {cert.lambda_factor:.4f}, theta = {cert.theta}, a = {cert.a}, "
          f"partition = {list(cert.partition)}")
    for window, residuals in zip(sol.windows, sol.residuals):
        bound = geometric_iteration_bound(residuals[0] ** 2, cert.lambda_factor, args.tol)
        print(f"\nrows {window[0]}..{window[1] - 1}: {len(residuals)} iterations (bound {bound})")
        print(f"{'n':>3} {'residual':>12} {'sq. ratio':>10}")
        prev = None
        for n, r in enumerate(residuals, 1):
            ratio = "" if prev is None else f"{(r / prev) ** 2:>10.4f}"
            print(f"{n:>3} {r:>12.4e} {ratio}")
            prev = r


if __name__ == "__main__":
    main()
