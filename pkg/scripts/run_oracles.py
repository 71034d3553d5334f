"""Oracle error table for the closed-form catalog problems.

    python scripts/run_oracles.py --degree 2 --seed 42 --json out/oracles.json
"""

import argparse
import json
from dataclasses import asdict

from bdsvie.verify import DEFAULT_ORACLES, run_oracle


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--degree", type=int, default=2)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--scale", type=float, default=1.0, help="multiply every M by this factor")
    parser.add_argument("--json", default=None, help="also write the rows here")
    args = parser.parse_args()

    rows = []
    print(f"{'problem':<16} {'N':>4} {'M':>6} {'Y err':>8} {'Z err':>8} {'Y sup':>8}  status")
    for name, setting in DEFAULT_ORACLES.items():
        params = asdict(setting)
        params["M"] = int(setting.M * args.scale)
        row = run_oracle(name, type(setting)(**params), degree=args.degree, seed=args.seed)
        z = "-" if row.z_error is None else f"{row.z_error:.4f}"
        print(f"{name:<16} {row.N:>4} {row.M:>6} {row.y_error:>8.4f} {z:>8} {row.y_sup_error:>8.4f}  "
              f"{'PASS' if row.passed else 'FAIL'}")
        rows.append(row.to_dict())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
