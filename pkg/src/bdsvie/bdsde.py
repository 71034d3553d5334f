"""Backward doubly stochastic differential equations by regression dynamic programming.

Solves ``lam(r) = terminal + int_r^T f ds + int_r^T g dB - int_r^T mu dW`` on
the grid, stepping from ``N-1`` down to ``i0``. ``g`` multiplies the backward
increment ``B(r_{j+1}) - B(r_j)`` and is evaluated at the right endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .regression import RegressionOperator


@dataclass(frozen=True)
class BdsdeDrivers:
    """``f(r, y, z) -> (M, k)`` and ``g(r, y, z) -> (M, k, l)`` at time ``r``."""

    f: Callable
    g: Callable


def drivers_from_spec(spec) -> BdsdeDrivers:
    """Non-Volterra reading of a problem: both time arguments set to ``r``."""
    return BdsdeDrivers(f=lambda r, y, z: spec.f(r, r, y, z), g=lambda r, y, z: spec.g(r, r, y, z))


@dataclass
class BdsdeConfig:
    degree: int = 2
    ridge: float | None = None
    inner_iterations: int = 2


@dataclass
class BdsdeSolution:
    """``lam[j - start]`` is ``(M, k)``; ``mu[j - start]`` is ``(M, k, d)`` for j < N."""

    start: int
    lam: np.ndarray
    mu: np.ndarray
    inner_distances: list = field(default_factory=list)

    def lam_at(self, j: int) -> np.ndarray:
        return self.lam[j - self.start]

    def mu_at(self, j: int) -> np.ndarray:
        return self.mu[j - self.start]


def _check_finite(x, what, j):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite {what} at step {j}")


def solve_bdsde(drivers: BdsdeDrivers, ens, i0: int, terminal, config: BdsdeConfig | None = None,
                operator: RegressionOperator | None = None) -> BdsdeSolution:
    """Backward recursion with ``config.inner_iterations`` fixed-point sweeps per step.

    Each sweep evaluates the drivers at the current iterate ``(lam~, mu~)``,
    starting from ``(lam(r_{j+1}), mu(r_{j+1}))``, then sets
    ``mu~ = E_j[(lam(r_{j+1}) + g dB_j) dW_j'] / dt`` and
    ``lam~ = E_j[lam(r_{j+1}) + f dt + g dB_j]``.
    """
    config = config or BdsdeConfig()
    op = operator or RegressionOperator(ens, config.degree, config.ridge)
    grid = ens.grid
    N, dt = grid.n_steps, grid.dt
    if not 0 <= i0 <= N:
        raise IndexError(f"start index {i0} outside [0, {N}]")
    if config.inner_iterations < 1:
        raise ValueError("need at least one inner iteration")
    terminal = np.asarray(terminal, dtype=float).reshape(ens.n_paths, -1)
    M, k = terminal.shape
    t = grid.times
    lam = np.empty((N - i0 + 1, M, k))
    mu = np.empty((N - i0, M, k, ens.d))
    lam[-1] = terminal
    history = []
    mu_next = np.zeros((M, k, ens.d))
    for j in range(N - 1, i0 - 1, -1):
        lam_next = lam[j + 1 - i0]
        db = ens.db[:, j, :]
        lam_it, mu_it = lam_next, mu_next
        dists = []
        for _ in range(config.inner_iterations):
            fv = np.asarray(drivers.f(t[j], lam_it, mu_it), dtype=float)
            gv = np.asarray(drivers.g(t[j + 1], lam_it, mu_it), dtype=float)
            _check_finite(fv, "f driver", j)
            _check_finite(gv, "g driver", j)
            noise = lam_next + np.einsum("mkl,ml->mk", gv, db)
            mu_new = op.martingale_coefficient(noise, j)
            lam_new = op.conditional(noise + fv * dt, j)
            dists.append(float(np.mean(np.sum((lam_new - lam_it) ** 2, axis=-1))
                               + np.mean(np.sum((mu_new - mu_it) ** 2, axis=(-2, -1)))))
            lam_it, mu_it = lam_new, mu_new
        _check_finite(lam_it, "lambda", j)
        _check_finite(mu_it, "mu", j)
        lam[j - i0], mu[j - i0] = lam_it, mu_it
        mu_next = mu_it
        history.append(dists)
    history.reverse()
    return BdsdeSolution(i0, lam, mu, history)
