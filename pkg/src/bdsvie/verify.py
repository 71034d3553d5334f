"""Executable checks: a-priori bound, uniqueness, contraction ratios, oracle errors.

Every result carries the numbers its ``passed`` flag is computed from, so a
serialized report can be re-audited without rerunning anything.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import DiagonalProcess, relative_l2_error
from .certificate import build_certificate
from .grid import make_grid, sample_ensemble
from .problems import catalog_problem
from .regression import RegressionOperator
from .solver import FrozenField, field_distance_sq, stitched_solve

APRIORI_SLACK = 1.1
RATIO_SLACK = 0.1
UNIQUENESS_FACTOR = 10.0


@dataclass
class AprioriResult:
    lhs: float
    rhs: float
    slack_ratio: float
    slack: float = APRIORI_SLACK

    @property
    def passed(self) -> bool:
        return self.lhs <= self.slack * self.rhs

    def to_dict(self):
        return {**asdict(self), "passed": self.passed}


def check_apriori_bound(sol, spec, ens, window=None, slack: float = APRIORI_SLACK) -> AprioriResult:
    """Compare the unweighted norm of a solution with the frozen-driver a-priori bound.

    ``rhs = 3 (T-S) E|xi|^2 + 3 max(T-S, 1) E sum sum (|f|^2 + |g|^2) dt^2`` with f and
    g evaluated along the solution on each cell.
    """
    grid = ens.grid
    N, dt, t = grid.n_steps, grid.dt, grid.times
    i_s, i_e = (0, N) if window is None else window
    if not 0 <= i_s < i_e <= N or sol.y.grid != grid:
        raise ValueError(f"window {window} does not match the solution grid")
    M = ens.n_paths
    length = (i_e - i_s) * dt
    y = sol.y.values
    terminal = y[i_e]
    lhs = float(np.einsum("imk,imk->", y[i_s:i_e], y[i_s:i_e])) * dt / M
    drivers = 0.0
    for i in range(i_s, i_e):
        cells = sol.z.row(i)[: i_e - i]
        lhs += float(np.einsum("jmkd,jmkd->", cells, cells)) * dt * dt / M
        s = t[i:i_e][:, None]
        fv = spec.f(t[i], s, y[i:i_e], cells)
        gv = spec.g(t[i], s, y[i:i_e], cells)
        drivers += (float(np.sum(fv ** 2)) + float(np.sum(gv ** 2))) * dt * dt / M
    rhs = 3 * length * float(np.mean(np.sum(terminal ** 2, axis=-1))) + 3 * max(length, 1.0) * drivers
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return AprioriResult(lhs, rhs, ratio, slack)


@dataclass
class UniquenessResult:
    distance: float
    tol: float
    factor: float = UNIQUENESS_FACTOR
    converged: bool = True

    @property
    def passed(self) -> bool:
        return self.converged and self.distance <= self.factor * self.tol

    def to_dict(self):
        return {**asdict(self), "passed": self.passed}


def run_uniqueness_test(spec, ens, cert, tol: float = 1e-4, max_iter: int = 25,
                        operator: RegressionOperator | None = None, inits=None,
                        factor: float = UNIQUENESS_FACTOR) -> UniquenessResult:
    """Stitched solves from two starting fields; default starts are zero and y = xi, z = 0."""
    op = operator or RegressionOperator(ens)
    if inits is None:
        inits = (FrozenField.zeros(ens, spec.k), FrozenField.constant(ens, spec.terminal(ens)))
    first, second = (stitched_solve(spec, ens, cert, tol, max_iter, init, op) for init in inits)
    N = ens.grid.n_steps
    dist = math.sqrt(field_distance_sq(first.field, second.field, cert.a, (0, N)))
    return UniquenessResult(dist, tol, factor, first.converged and second.converged)


@dataclass
class ContractionResult:
    ratios: list
    lambda_factor: float
    slack: float = RATIO_SLACK

    @property
    def passed(self) -> bool:
        # the first ratio is exempt
        return all(r <= self.lambda_factor + self.slack for r in self.ratios[1:])

    def to_dict(self):
        return {**asdict(self), "passed": self.passed}


def measure_contraction_ratios(residuals, lambda_factor: float, slack: float = RATIO_SLACK) -> ContractionResult:
    """Ratios ``residual[n+1]^2 / residual[n]^2`` of successive Picard distances."""
    residuals = [float(r) for r in residuals]
    if len(residuals) < 3:
        raise ValueError(f"need at least 3 residuals, got {len(residuals)}")
    ratios = [(b / a) ** 2 if a > 0 else 0.0 for a, b in zip(residuals, residuals[1:])]
    return ContractionResult(ratios, float(lambda_factor), slack)


def geometric_iteration_bound(first_sq_residual: float, lambda_factor: float, tol: float) -> int:
    """Iterations a Lambda-contraction needs to bring the step below ``tol``, plus 2."""
    if first_sq_residual <= tol ** 2:
        return 1
    n = math.log(tol ** 2 * (1 - lambda_factor) / first_sq_residual) / math.log(lambda_factor)
    return math.ceil(n) + 2


@dataclass
class OracleSetting:
    N: int
    M: int
    y_max: float
    z_max: float | None = None
    y_sup_max: float | None = None
    params: dict = field(default_factory=dict)


DEFAULT_ORACLES = {
    "martingale": OracleSetting(32, 8192, 0.05, 0.05),
    "backward-driver": OracleSetting(32, 8192, 0.02),
    "linear-drift": OracleSetting(64, 16384, 0.05, 0.05, params={"rho": 1.0}),
    "kernel": OracleSetting(32, 8192, 0.05, 0.05, y_sup_max=0.03),
}


@dataclass
class OracleRow:
    problem: str
    N: int
    M: int
    degree: int
    y_error: float
    z_error: float | None
    y_sup_error: float
    y_max: float
    z_max: float | None
    y_sup_max: float | None
    converged: bool

    @property
    def passed(self) -> bool:
        ok = self.converged and self.y_error <= self.y_max
        if self.z_max is not None:
            ok = ok and self.z_error is not None and self.z_error <= self.z_max
        if self.y_sup_max is not None:
            ok = ok and self.y_sup_error <= self.y_sup_max
        return ok

    def to_dict(self):
        return {**asdict(self), "passed": self.passed}


def sup_error(estimate: DiagonalProcess, reference: DiagonalProcess) -> float:
    """Largest over grid times of the ensemble RMS error."""
    diff = estimate.values - reference.values
    return float(np.sqrt(np.max(np.mean(np.sum(diff ** 2, axis=-1), axis=1))))


def run_oracle(name: str, setting: OracleSetting, degree: int = 2, ridge=None, seed: int = 42,
               tol: float = 1e-4, max_iter: int = 25, T: float = 1.0, threads: int = 1) -> OracleRow:
    entry = catalog_problem(name, T=T, **setting.params)
    spec = entry.spec
    ens = sample_ensemble(make_grid(T, setting.N), setting.M, spec.d, spec.l, seed, threads)
    cert = build_certificate(spec.C, spec.alpha, spec.T, grid_steps=setting.N)
    sol = stitched_solve(spec, ens, cert, tol, max_iter, operator=RegressionOperator(ens, degree, ridge))
    y_ref, z_ref = entry.oracle(ens)
    z_err = relative_l2_error(sol.z, z_ref)
    return OracleRow(
        problem=name, N=setting.N, M=setting.M, degree=degree,
        y_error=relative_l2_error(sol.y, y_ref),
        z_error=None if math.isnan(z_err) else z_err,
        y_sup_error=sup_error(sol.y, y_ref),
        y_max=setting.y_max, z_max=setting.z_max, y_sup_max=setting.y_sup_max,
        converged=sol.converged,
    )


def run_oracle_suite(problems=None, overrides=None, **kwargs) -> list:
    """Oracle errors for every closed-form catalog problem.

    ``overrides`` maps a problem name to a dict of OracleSetting fields;
    remaining keyword arguments go to :func:`run_oracle`.
    """
    rows = []
    for name in problems or DEFAULT_ORACLES:
        base = DEFAULT_ORACLES[name]
        setting = OracleSetting(**{**asdict(base), **(overrides or {}).get(name, {})})
        rows.append(run_oracle(name, setting, **kwargs))
    return rows
