"""Least-squares Monte Carlo estimates of conditional expectations.

The conditioning information at grid index i joins the past of W with the
future increments of B, so the regression features are polynomials in
``W(t_i)`` and ``B(T) - B(t_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

RELATIVE_RIDGE = 1e-8
_COND_LIMIT = 1e13


class IllConditionedError(LinAlgError):
    pass


def monomial_exponents(n_vars: int, degree: int):
    """Variable-index tuples of every monomial of total degree <= ``degree``, graded."""
    return [c for p in range(degree + 1) for c in combinations_with_replacement(range(n_vars), p)]


def n_features(d: int, l: int, degree: int) -> int:  # noqa: E741
    return comb(d + l + degree, degree)


def state_variables(ens, i: int) -> np.ndarray:
    """Columns ``W(t_i)`` (d of them) then ``B(T) - B(t_i)`` (l of them), shape (M, d+l)."""
    N = ens.grid.n_steps
    if not 0 <= i <= N:
        raise IndexError(f"index {i} outside [0, {N}]")
    return np.concatenate([ens.w[:, i, :], ens.b[:, N, :] - ens.b[:, i, :]], axis=1)


def build_basis(ens, i: int, degree: int) -> np.ndarray:
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    x = state_variables(ens, i)
    cols = [np.prod(x[:, list(idx)], axis=1) if idx else np.ones(x.shape[0])
            for idx in monomial_exponents(x.shape[1], degree)]
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class ConditionalEstimate:
    coefficients: np.ndarray
    predictions: np.ndarray
    residual_second_moment: float
    condition: float


class Projector:
    """Ridge least-squares projection onto the span of a fixed feature matrix.

    Solves ``(X'X/M + ridge I) beta = X'y/M``. ``ridge=None`` selects
    ``1e-8 * trace(X'X/M) / n_features``; ``ridge=0`` is plain least squares
    and refuses a numerically singular Gram matrix.
    """

    def __init__(self, features: np.ndarray, ridge: float | None = None):
        X = np.asarray(features, dtype=float)
        M, F = X.shape
        if M < F:
            raise ValueError(f"need at least as many paths ({M}) as features ({F})")
        gram = X.T @ X / M
        if ridge is None:
            ridge = RELATIVE_RIDGE * np.trace(gram) / F
        if ridge < 0:
            raise ValueError("ridge must be nonnegative")
        eig = np.linalg.eigvalsh(gram)
        self.condition = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
        if ridge == 0 and not self.condition < _COND_LIMIT:
            raise IllConditionedError(f"feature Gram matrix is ill-conditioned (condition {self.condition:.3g})")
        try:
            self._factor = cho_factor(gram + ridge * np.eye(F))
        except LinAlgError as exc:
            raise IllConditionedError("feature Gram matrix is not positive definite") from exc
        self.features = X
        self.ridge = float(ridge)

    def coefficients(self, targets: np.ndarray, axis: int = 0) -> np.ndarray:
        rhs = np.tensordot(self.features, targets, axes=([0], [axis])) / self.features.shape[0]
        shape = rhs.shape
        return cho_solve(self._factor, rhs.reshape(shape[0], -1)).reshape(shape)

    def project(self, targets: np.ndarray, axis: int = 0) -> np.ndarray:
        """Fitted values, same shape as ``targets``; paths run along ``axis``."""
        targets = np.asarray(targets, dtype=float)
        coef = self.coefficients(targets, axis)
        fitted = np.tensordot(self.features, coef, axes=([1], [0]))
        return np.moveaxis(fitted, 0, axis)


class RegressionOperator:
    """Per-index projectors for one ensemble, built on first use and cached."""

    def __init__(self, ens, degree: int = 2, ridge: float | None = None):
        self.ens = ens
        self.degree = degree
        self.ridge = ridge
        self._cache = {}

    def at(self, i: int) -> Projector:
        if i not in self._cache:
            self._cache[i] = Projector(build_basis(self.ens, i, self.degree), self.ridge)
        return self._cache[i]

    def conditional(self, targets, i: int, axis: int = 0) -> np.ndarray:
        return self.at(i).project(targets, axis)

    def martingale_coefficient(self, targets, j: int, axis: int = 0) -> np.ndarray:
        """Estimate of ``E[targets dW_j' | F_j] / dt``; a trailing axis of size d is appended.

        The targets are centred on their own conditional mean first. The
        centring term is measurable at j, so the estimated quantity is
        unchanged while the variance of the regression target drops.
        """
        ens = self.ens
        N = ens.grid.n_steps
        if not 0 <= j <= N - 1:
            raise IndexError(f"index {j} outside [0, {N - 1}]")
        proj = self.at(j)
        targets = np.asarray(targets, dtype=float)
        centred = targets - proj.project(targets, axis)
        dw = ens.dw[:, j, :]
        shape = [1] * centred.ndim + [ens.d]
        shape[axis] = ens.n_paths
        products = centred[..., None] * dw.reshape(shape)
        return proj.project(products, axis) / ens.grid.dt


def estimate_conditional(targets, features, ridge: float | None = None) -> ConditionalEstimate:
    proj = Projector(features, ridge)
    targets = np.asarray(targets, dtype=float)
    coef = proj.coefficients(targets)
    fitted = proj.project(targets)
    resid = targets - fitted
    return ConditionalEstimate(coef, fitted, float(np.mean(resid ** 2)), proj.condition)


def estimate_martingale_coefficient(targets, ens, j: int, degree: int = 2,
                                    ridge: float | None = None) -> np.ndarray:
    """Per-path ``(M, k, d)`` estimate of ``E[targets dW_j' | F_j] / dt``.

    ``targets`` is ``(M,)`` (treated as k = 1) or ``(M, k)``.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    return RegressionOperator(ens, degree, ridge).martingale_coefficient(targets, j)
