"""Command line: ``bdsvie {solve,verify,certificate,oracles} config.json``.

Outputs are byte-deterministic for a fixed configuration and seed; wall-clock
timings are written only when ``output.timings`` is true.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .certificate import CertificateError, violations
from .config import CHECKS, ConfigError, load_config
from .grid import make_grid, sample_ensemble
from .regression import RegressionOperator
from .solver import fixed_point_residual, stitched_solve
from .verify import (
    check_apriori_bound,
    geometric_iteration_bound,
    measure_contraction_ratios,
    run_oracle_suite,
    run_uniqueness_test,
)

log = logging.getLogger("bdsvie")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class OutputError(RuntimeError):
    pass


def _finite(value, context):
    if isinstance(value, float) and not math.isfinite(value):
        raise OutputError(f"non-finite value in {context}")
    return value


def _check_json(obj, context="output"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_json(v, f"{context}.{k}")
    elif isinstance(obj, (list, tuple)):
        for n, v in enumerate(obj):
            _check_json(v, f"{context}[{n}]")
    else:
        _finite(obj, context)


def write_json(path: Path, obj) -> None:
    _check_json(obj, path.name)
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8", newline="\n")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for n, row in enumerate(rows):
            for v in row:
                if not math.isfinite(v):
                    raise OutputError(f"non-finite value in {path.name}, data row {n + 1}")
            writer.writerow([repr(float(v)) for v in row])


class Run:
    """One configured problem with its ensemble, certificate and a lazily computed solution."""

    def __init__(self, cfg, threads=1):
        self.cfg = cfg
        self.spec = cfg.build_problem()
        s = cfg.solver
        self.cert = cfg.certificate(self.spec)
        self.timings = {}
        start = time.perf_counter()
        self.ens = sample_ensemble(make_grid(self.spec.T, s.N), s.M, self.spec.d, self.spec.l, s.seed, threads)
        self.timings["ensemble"] = time.perf_counter() - start
        self.op = RegressionOperator(self.ens, s.degree, s.ridge)
        self._solution = None

    @property
    def solution(self):
        if self._solution is None:
            s = self.cfg.solver
            start = time.perf_counter()
            self._solution = stitched_solve(self.spec, self.ens, self.cert, s.tol, s.max_iter, operator=self.op)
            self.timings["solve"] = time.perf_counter() - start
        return self._solution


def _diagnostics(run) -> dict:
    sol = run.solution
    out = {
        "problem": run.spec.name,
        "expressions": run.spec.sources,
        "dims": list(run.spec.dims),
        "solver": run.cfg.to_dict()["solver"],
        "certificate": run.cert.to_dict(),
        "windows": [list(w) for w in sol.windows],
        "picard_residuals": sol.residuals,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "fixed_point_residual": fixed_point_residual(run.spec, run.ens, sol.field, run.cert.a, run.op),
    }
    if run.cfg.output.timings:
        out["timings"] = run.timings
    return out


def cmd_solve(cfg, out_dir: Path, threads: int = 1) -> int:
    run = Run(cfg, threads)
    sol = run.solution
    if not sol.converged:
        log.warning("Picard iteration did not reach tol=%g in %d iterations per strip",
                    cfg.solver.tol, cfg.solver.max_iter)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = run.ens.grid
    t = grid.times
    k, d = run.spec.k, run.spec.d
    if "csv" in cfg.output.formats:
        y = sol.y.values
        y_header = ["t"] + [f"y{r + 1}_{stat}" for r in range(k) for stat in ("mean", "std")]
        y_rows = ([t[i]] + [v for r in range(k) for v in (y[i, :, r].mean(), y[i, :, r].std())]
                  for i in range(grid.n_steps + 1))
        write_csv(out_dir / "solution_y.csv", y_header, y_rows)
        z_header = ["t", "s"] + [f"z{r + 1}{c + 1}_{stat}" for r in range(k) for c in range(d)
                                 for stat in ("mean", "std")]

        def z_rows():
            for i in range(grid.n_steps):
                row = sol.z.row(i)
                for jj in range(row.shape[0]):
                    cell = row[jj]
                    yield [t[i], t[i + jj]] + [v for r in range(k) for c in range(d)
                                               for v in (cell[:, r, c].mean(), cell[:, r, c].std())]

        write_csv(out_dir / "solution_z.csv", z_header, z_rows())
    if "json" in cfg.output.formats:
        write_json(out_dir / "diagnostics.json", _diagnostics(run))
    print(f"solved {run.spec.name}: {sol.iterations_used} Picard iterations over "
          f"{len(sol.windows)} strip(s), converged={sol.converged}; wrote {out_dir}")
    return EXIT_OK


def _check_certificate(run):
    problems = violations(run.cert)
    return {"certificate": run.cert.to_dict(), "violations": problems, "passed": not problems}


def _check_apriori(run):
    res = check_apriori_bound(run.solution, run.spec, run.ens, slack=run.cfg.verify.apriori_slack)
    return res.to_dict()


def _check_uniqueness(run):
    s = run.cfg.solver
    res = run_uniqueness_test(run.spec, run.ens, run.cert, s.tol, s.max_iter, run.op,
                              factor=run.cfg.verify.uniqueness_factor)
    return res.to_dict()


def _check_contraction(run):
    sol = run.solution
    tol = run.cfg.solver.tol
    lam = run.cert.lambda_factor
    windows = []
    for window, residuals in zip(sol.windows, sol.residuals):
        entry = {"window": list(window), "residuals": residuals}
        if len(residuals) >= 3:
            res = measure_contraction_ratios(residuals, lam, run.cfg.verify.ratio_slack)
            bound = geometric_iteration_bound(residuals[0] ** 2, lam, tol)
            entry.update(ratios=res.ratios, ratios_passed=res.passed, iteration_bound=bound,
                         passed=res.passed and residuals[-1] <= tol and len(residuals) <= bound)
        else:
            # a map that settles within two sweeps has no ratio sequence to test
            entry.update(ratios=[], passed=residuals[-1] <= tol)
        windows.append(entry)
    return {"lambda_factor": lam, "slack": run.cfg.verify.ratio_slack, "converged": sol.converged,
            "windows": windows, "passed": sol.converged and all(w["passed"] for w in windows)}


def _check_oracles(run):
    s = run.cfg.solver
    rows = run_oracle_suite(overrides=run.cfg.verify.oracles, degree=s.degree, ridge=s.ridge,
                            seed=s.seed, tol=s.tol, max_iter=s.max_iter)
    table = [r.to_dict() for r in rows]
    return {"rows": table, "passed": all(r["passed"] for r in table)}


CHECK_FUNCS = {
    "certificate": _check_certificate,
    "apriori": _check_apriori,
    "uniqueness": _check_uniqueness,
    "contraction": _check_contraction,
    "oracles": _check_oracles,
}


def cmd_verify(cfg, out_dir: Path, threads: int = 1, checks=None) -> int:
    checks = list(checks or cfg.verify.checks)
    run = Run(cfg, threads)
    report = {"problem": run.spec.name, "checks": {}}
    for name in checks:
        start = time.perf_counter()
        try:
            report["checks"][name] = CHECK_FUNCS[name](run)
        except Exception as exc:  # one failing check must not abort the others
            log.exception("check %s raised", name)
            report["checks"][name] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        if cfg.output.timings:
            report["checks"][name]["seconds"] = time.perf_counter() - start
    report["passed"] = all(c["passed"] for c in report["checks"].values())
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "report.json", report)
    width = max(len(n) for n in checks)
    for name, result in report["checks"].items():
        detail = result.get("error", "")
        print(f"{name:<{width}}  {'PASS' if result['passed'] else 'FAIL'}  {detail}".rstrip())
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_certificate(cfg, out_dir: Path | None = None) -> int:
    spec = cfg.build_problem()
    cert = cfg.certificate(spec)
    payload = cert.to_dict()
    text = json.dumps(payload, indent=2, allow_nan=False)
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "certificate.json", payload)
    return EXIT_OK


def cmd_oracles(cfg, out_dir: Path, threads: int = 1) -> int:
    result = _check_oracles(Run(cfg, threads))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "oracles.json", result)
    print(f"{'problem':<16} {'N':>4} {'M':>6} {'Y err':>8} {'Z err':>8}  status")
    for r in result["rows"]:
        z = "-" if r["z_error"] is None else f"{r['z_error']:.4f}"
        print(f"{r['problem']:<16} {r['N']:>4} {r['M']:>6} {r['y_error']:>8.4f} {z:>8}  "
              f"{'PASS' if r['passed'] else 'FAIL'}")
    return EXIT_OK if result["passed"] else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdsvie", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "verify", "certificate", "oracles"):
        p = sub.add_parser(name)
        p.add_argument("config", type=Path)
        p.add_argument("--seed", type=int, default=None, help="override solver.seed")
        p.add_argument("--out-dir", type=Path, default=None, help="override output.directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for path generation")
        if name == "verify":
            p.add_argument("--checks", default=None,
                           help=f"comma-separated subset of {','.join(CHECKS)}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.solver.seed = args.seed
        checks = None
        if getattr(args, "checks", None):
            checks = [c.strip() for c in args.checks.split(",") if c.strip()]
            bad = sorted(set(checks) - set(CHECKS))
            if bad:
                raise ConfigError(f"unknown check(s): {', '.join(bad)}")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out_dir or Path(cfg.output.directory)
    threads = max(1, args.threads)
    try:
        # BLAS stays single-threaded whatever --threads says: threaded reductions
        # change summation order and would break byte-identical output
        with threadpool_limits(limits=1):
            if args.command == "solve":
                return cmd_solve(cfg, out_dir, threads)
            if args.command == "verify":
                return cmd_verify(cfg, out_dir, threads, checks)
            if args.command == "certificate":
                return cmd_certificate(cfg, args.out_dir)
            return cmd_oracles(cfg, out_dir, threads)
    except (CertificateError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, OutputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
