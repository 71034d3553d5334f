"""Backward doubly stochastic Volterra equations on the grid triangle.

Discrete equation, for every row i < N and path::

    Y_i = xi + sum_{j>=i} f(t_i, t_j, Y_j, Z_ij) dt
             + sum_{j>=i} g(t_i, t_{j+1}, Y_{j+1}, Z_ij) dB_j
             - sum_{j>=i} Z_ij dW_j

with ``Y_N = xi``. Freezing (Y, Z) inside f and g decouples the rows: row i
is then a BDSDE on [t_i, T] with known drivers, and the pair is read off its
diagonal. The Picard map iterates that frozen solve.

A window ``(i_S, i_E)`` selects rows i_S..i_E-1 as unknowns. Every row still
runs to the horizon, with Y frozen at already-solved values beyond i_E; this
is how the stitched solver extends a solution leftward one strip at a time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .calculus import DiagonalProcess, TriangularField
from .certificate import ContractionCertificate
from .regression import RegressionOperator

log = logging.getLogger(__name__)


@dataclass
class FrozenField:
    y: DiagonalProcess
    z: TriangularField

    @classmethod
    def zeros(cls, ens, k: int) -> "FrozenField":
        return cls(DiagonalProcess.zeros(ens.grid, ens.n_paths, k),
                   TriangularField.zeros(ens.grid, ens.n_paths, k, ens.d))

    @classmethod
    def constant(cls, ens, value) -> "FrozenField":
        """y(t) = value (per path, for all t), z = 0."""
        value = np.asarray(value, dtype=float)
        y = np.broadcast_to(value, (ens.grid.n_steps + 1,) + value.shape).copy()
        return cls(DiagonalProcess(ens.grid, y),
                   TriangularField.zeros(ens.grid, ens.n_paths, value.shape[-1], ens.d))

    def copy(self) -> "FrozenField":
        return FrozenField(self.y.copy(), self.z.copy())


@dataclass
class SolverConfig:
    degree: int = 2
    ridge: float | None = None
    tol: float = 1e-4
    max_iter: int = 25


@dataclass
class SolutionEstimate:
    y: DiagonalProcess
    z: TriangularField
    certificate: ContractionCertificate
    windows: list
    residuals: list  # one list of Picard distances per window, in solve order
    iterations: list
    converged: bool

    @property
    def picard_residuals(self) -> list:
        return [r for rs in self.residuals for r in rs]

    @property
    def iterations_used(self) -> int:
        return sum(self.iterations)

    @property
    def field(self) -> FrozenField:
        return FrozenField(self.y, self.z)


def _check_window(window, N):
    i_s, i_e = window
    if not 0 <= i_s < i_e <= N:
        raise ValueError(f"window {window} must satisfy 0 <= start < end <= {N}")


def _terminal(terminal, M):
    terminal = np.asarray(terminal, dtype=float)
    return terminal.reshape(M, -1)


def solve_frozen_bdsvie(spec, ens, frozen: FrozenField, window, terminal,
                        operator: RegressionOperator | None = None):
    """Frozen-driver solve on the rows of ``window``.

    Returns ``(Y, Z)`` covering the whole grid: rows inside the window are
    new, everything else is copied from ``frozen``, and ``Y_N`` is the
    terminal value.
    """
    grid = ens.grid
    N, dt, t = grid.n_steps, grid.dt, grid.times
    _check_window(window, N)
    i_s, i_e = window
    op = operator or RegressionOperator(ens)
    xi = _terminal(terminal, ens.n_paths)
    y = frozen.y.values
    z = frozen.z
    Y = frozen.y.copy()
    Y.values[N] = xi
    Z = z.copy()
    offsets = z.offsets
    rows = np.arange(i_s, i_e)
    lam = np.broadcast_to(xi, (len(rows),) + xi.shape).copy()
    dw, db = ens.dw, ens.db
    for j in range(N - 1, i_s - 1, -1):
        act = rows[: min(j, i_e - 1) - i_s + 1]
        r = len(act)
        cells = z.column_cells(act, j)
        ti = t[act][:, None]
        fv = np.asarray(spec.f(ti, t[j], y[j][None], cells), dtype=float)
        gv = np.asarray(spec.g(ti, t[j + 1], y[j + 1][None], cells), dtype=float)
        noise = lam[:r] + np.einsum("rmkl,ml->rmk", gv, db[:, j])
        proj = op.at(j)
        k = noise.shape[-1]
        fitted = proj.project(np.concatenate([noise, fv], axis=-1), axis=1)
        fit_noise, fit_f = fitted[..., :k], fitted[..., k:]
        centred = noise - fit_noise
        mu = proj.project(centred[..., None] * dw[None, :, j, None, :], axis=1) / dt
        lam[:r] = fit_noise + fit_f * dt
        if not (np.all(np.isfinite(lam[:r])) and np.all(np.isfinite(mu))):
            raise FloatingPointError(f"non-finite values in frozen solve at column {j}")
        Z.values[offsets[act] + j - act] = mu
        if j < i_e:
            Y.values[j] = lam[r - 1]
    return Y, Z


def apply_theta(spec, ens, field: FrozenField, window, terminal,
                operator: RegressionOperator | None = None) -> FrozenField:
    Y, Z = solve_frozen_bdsvie(spec, ens, field, window, terminal, operator)
    return FrozenField(Y, Z)


def field_distance_sq(x: FrozenField, x_prev: FrozenField, a: float, window) -> float:
    """Squared a-weighted distance over the rows of ``window`` (z-rows run to the horizon)."""
    grid = x.y.grid
    N, dt, t = grid.n_steps, grid.dt, grid.times
    i_s, i_e = window
    M = x.y.n_paths
    dy = x.y.values[i_s:i_e] - x_prev.y.values[i_s:i_e]
    total = float(np.dot(np.exp(a * t[i_s:i_e]), np.einsum("imk,imk->i", dy, dy))) * dt
    zsum = 0.0
    for i in range(i_s, i_e):
        dz = x.z.row(i) - x_prev.z.row(i)
        zsum += float(np.dot(np.exp(a * t[i:N]), np.einsum("jmkd,jmkd->j", dz, dz)))
    return (total + zsum * dt * dt) / M


def picard_solve(spec, ens, window, terminal, cert: ContractionCertificate, tol: float = 1e-4,
                 max_iter: int = 25, init: FrozenField | None = None,
                 operator: RegressionOperator | None = None) -> SolutionEstimate:
    """Iterate the Picard map on ``window`` until the a-weighted step is at most ``tol``.

    Exhausting ``max_iter`` is not an error: the estimate comes back with
    ``converged=False`` and its residual history.
    """
    grid = ens.grid
    _check_window(window, grid.n_steps)
    if tol <= 0:
        raise ValueError("tol must be positive")
    length = (window[1] - window[0]) * grid.dt
    if not length < cert.max_step:
        raise ValueError(f"window length {length} is not below the certified step {cert.max_step}")
    op = operator or RegressionOperator(ens)
    xi = _terminal(terminal, ens.n_paths)
    x = FrozenField.zeros(ens, xi.shape[1]) if init is None else init.copy()
    x.y.values[grid.n_steps] = xi
    residuals = []
    converged = False
    for n in range(1, max_iter + 1):
        x_new = apply_theta(spec, ens, x, window, xi, op)
        dist = float(np.sqrt(field_distance_sq(x_new, x, cert.a, window)))
        residuals.append(dist)
        x = x_new
        log.debug("window %s iteration %d residual %.3e", window, n, dist)
        if dist <= tol:
            converged = True
            break
    return SolutionEstimate(x.y, x.z, cert, [tuple(window)], [residuals], [len(residuals)], converged)


def partition_indices(cert: ContractionCertificate, grid) -> list:
    """Grid indices of the stitch points, from N down to 0."""
    idx = [grid.index_of(p) for p in cert.partition]
    if idx[0] != grid.n_steps or idx[-1] != 0 or any(b <= a for b, a in zip(idx, idx[1:])):
        raise ValueError(f"partition {cert.partition} does not resolve to distinct grid points")
    for hi, lo in zip(idx, idx[1:]):
        if not (hi - lo) * grid.dt < cert.max_step:
            raise ValueError(f"grid interval [{lo}, {hi}] exceeds the certified step {cert.max_step}")
    return idx


def stitched_solve(spec, ens, cert: ContractionCertificate, tol: float = 1e-4, max_iter: int = 25,
                   init: FrozenField | None = None, operator: RegressionOperator | None = None
                   ) -> SolutionEstimate:
    """Solve the rightmost strip first, then extend leftward one strip at a time."""
    if abs(cert.partition[0] - ens.grid.end) > 1e-12:
        raise ValueError(f"certificate covers [0, {cert.partition[0]}] but the grid ends at {ens.grid.end}")
    idx = partition_indices(cert, ens.grid)
    op = operator or RegressionOperator(ens)
    xi = spec.terminal(ens)
    x = init
    windows, residuals, iterations = [], [], []
    converged = True
    for p, (hi, lo) in enumerate(zip(idx, idx[1:])):
        est = picard_solve(spec, ens, (lo, hi), xi, cert, tol, max_iter, x, op)
        if not est.converged:
            log.warning("strip %d (rows %d..%d) stopped after %d iterations, residual %.3e",
                        p, lo, hi - 1, est.iterations[0], est.residuals[0][-1])
        converged &= est.converged
        windows += est.windows
        residuals += est.residuals
        iterations += est.iterations
        x = est.field
    return SolutionEstimate(x.y, x.z, cert, windows, residuals, iterations, converged)


def pathwise_residual(spec, ens, y: DiagonalProcess, z: TriangularField, terminal) -> np.ndarray:
    """Row residuals of the discrete equation per path, shape (N, M, k)."""
    grid = ens.grid
    N, dt, t = grid.n_steps, grid.dt, grid.times
    xi = _terminal(terminal, ens.n_paths)
    out = np.empty((N,) + xi.shape)
    for i in range(N):
        cells = z.row(i)  # (N-i, M, k, d)
        s = t[i:N][:, None]
        fv = spec.f(t[i], s, y.values[i:N], cells)
        gv = spec.g(t[i], t[i + 1:N + 1][:, None], y.values[i + 1:N + 1], cells)
        rhs = (xi + fv.sum(axis=0) * dt
               + np.einsum("jmkl,jml->mk", gv, np.moveaxis(ens.db[:, i:], 1, 0))
               - np.einsum("jmkd,jmd->mk", cells, np.moveaxis(ens.dw[:, i:], 1, 0)))
        out[i] = y.values[i] - rhs
    return out


def fixed_point_residual(spec, ens, field: FrozenField, a: float,
                         operator: RegressionOperator | None = None) -> float:
    """a-weighted distance between a global field and one Picard map of it over all rows."""
    N = ens.grid.n_steps
    image = apply_theta(spec, ens, field, (0, N), spec.terminal(ens), operator)
    return float(np.sqrt(field_distance_sq(image, field, a, (0, N))))


def direct_conditional_y(spec, ens, frozen: FrozenField, i: int, terminal,
                         operator: RegressionOperator | None = None) -> np.ndarray:
    """Y(t_i) as one projection of terminal + f-quadrature + backward g-sum.

    With drivers frozen this must agree with the recursive row solve by the
    tower property; it is the check behind taking conditional expectations
    of the equation.
    """
    grid = ens.grid
    N, dt, t = grid.n_steps, grid.dt, grid.times
    op = operator or RegressionOperator(ens)
    xi = _terminal(terminal, ens.n_paths)
    cells = frozen.z.row(i)
    fv = spec.f(t[i], t[i:N][:, None], frozen.y.values[i:N], cells)
    gv = spec.g(t[i], t[i + 1:N + 1][:, None], frozen.y.values[i + 1:N + 1], cells)
    target = xi + fv.sum(axis=0) * dt + np.einsum("jmkl,jml->mk", gv, np.moveaxis(ens.db[:, i:], 1, 0))
    return op.conditional(target, i)
