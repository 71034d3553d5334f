"""Discrete stochastic calculus on a uniform grid.

Conventions: forward Itô sums evaluate the integrand at the left endpoint,
backward Itô sums (against B) at the right endpoint, Lebesgue integrals use
left Riemann sums. Path-indexed arrays put the path axis first and the time
axis second, e.g. ``H[m, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import TimeGrid


def _check_start(i0: int, N: int) -> None:
    if not 0 <= i0 <= N - 1:
        raise IndexError(f"start index {i0} outside [0, {N - 1}]")


def _as_vector_driver(H: np.ndarray, X: np.ndarray):
    H = np.asarray(H, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[..., None]
        H = H[..., None]
    return H, X


def forward_ito_sum(H, W, i0: int = 0) -> np.ndarray:
    """``sum_{j>=i0} H(t_j) . (W_{j+1} - W_j)`` per path.

    ``W`` is ``(M, N+1)`` or ``(M, N+1, d)``; ``H`` is ``(M, N+1, ..., d)``
    with the last axis contracted against the increment (scalar drivers drop
    that axis on both).
    """
    H, W = _as_vector_driver(H, W)
    N = W.shape[1] - 1
    _check_start(i0, N)
    dW = np.diff(W[:, i0:], axis=1)
    return np.einsum("mj...c,mjc->m...", H[:, i0:N], dW)


def backward_ito_sum(G, B, i0: int = 0) -> np.ndarray:
    """``sum_{j>=i0} G(t_{j+1}) . (B_{j+1} - B_j)`` per path (right endpoint)."""
    G, B = _as_vector_driver(G, B)
    N = B.shape[1] - 1
    _check_start(i0, N)
    dB = np.diff(B[:, i0:], axis=1)
    return np.einsum("mj...c,mjc->m...", G[:, i0 + 1:N + 1], dB)


def riemann_sum(F, grid: TimeGrid, i0: int = 0) -> np.ndarray:
    """Left-endpoint quadrature ``sum_{j>=i0} F(t_j) dt`` per path."""
    F = np.asarray(F, dtype=float)
    N = grid.n_steps
    _check_start(i0, N)
    return F[:, i0:N].sum(axis=1) * grid.dt


class DiagonalProcess:
    """Y(t_i) per path, stored time-major as ``values[i, m, :]`` of shape (N+1, M, k)."""

    def __init__(self, grid: TimeGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[0] != grid.n_steps + 1:
            raise ValueError(f"expected shape (N+1, M, k), got {values.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid: TimeGrid, M: int, k: int) -> "DiagonalProcess":
        return cls(grid, np.zeros((grid.n_steps + 1, M, k)))

    @property
    def n_paths(self) -> int:
        return self.values.shape[1]

    @property
    def k(self) -> int:
        return self.values.shape[2]

    def copy(self) -> "DiagonalProcess":
        return DiagonalProcess(self.grid, self.values.copy())

    def __getitem__(self, i):
        return self.values[i]


def triangle_offsets(N: int) -> np.ndarray:
    """Start of row i in the packed triangle {(i, j): 0 <= i <= j <= N-1}."""
    rows = np.arange(N + 1)
    return rows * N - rows * (rows - 1) // 2


class TriangularField:
    """Z(t_i, s_j) for 0 <= i <= j <= N-1, one k x d matrix per cell and path.

    Cells are packed row by row: row i holds columns j = i..N-1 contiguously
    in ``values[offsets[i]:offsets[i+1]]``, each of shape (M, k, d).
    """

    def __init__(self, grid: TimeGrid, values: np.ndarray):
        N = grid.n_steps
        values = np.asarray(values, dtype=float)
        if values.ndim != 4 or values.shape[0] != N * (N + 1) // 2:
            raise ValueError(f"expected {N * (N + 1) // 2} packed cells, got shape {values.shape}")
        self.grid = grid
        self.values = values
        self.offsets = triangle_offsets(N)

    @classmethod
    def zeros(cls, grid: TimeGrid, M: int, k: int, d: int) -> "TriangularField":
        N = grid.n_steps
        return cls(grid, np.zeros((N * (N + 1) // 2, M, k, d)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "TriangularField":
        """Build from ``fn(i, j) -> (M, k, d)`` evaluated on every cell."""
        N = grid.n_steps
        cells = [fn(i, j) for i in range(N) for j in range(i, N)]
        return cls(grid, np.stack(cells))

    @property
    def n_paths(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape[2:]

    def _check(self, i, j) -> None:
        N = self.grid.n_steps
        if not (0 <= i <= j <= N - 1):
            raise IndexError(f"cell ({i}, {j}) is outside the triangle 0 <= i <= j <= {N - 1}")

    def cell_index(self, i: int, j: int) -> int:
        self._check(i, j)
        return int(self.offsets[i]) + j - i

    def cell(self, i: int, j: int) -> np.ndarray:
        return self.values[self.cell_index(i, j)]

    def row(self, i: int) -> np.ndarray:
        """Columns j = i..N-1 of row i, shape (N-i, M, k, d)."""
        self._check(i, i)
        return self.values[self.offsets[i]:self.offsets[i + 1]]

    def column_cells(self, rows: np.ndarray, j: int) -> np.ndarray:
        """Cells (i, j) for every i in ``rows`` (all i <= j)."""
        rows = np.asarray(rows)
        if rows.size and (rows.min() < 0 or rows.max() > j or j > self.grid.n_steps - 1):
            raise IndexError(f"column {j} requested for rows outside the triangle")
        return self.values[self.offsets[rows] + j - rows]

    def copy(self) -> "TriangularField":
        return TriangularField(self.grid, self.values.copy())


@dataclass(frozen=True)
class WeightedNormParams:
    """Exponent ``a`` and grid window ``[i_S, i_T]``.

    The z-part sums rows i in [i_S, i_T) and columns j in [i, z_end), with
    ``z_end`` defaulting to ``i_T``. Strips whose rows run to the horizon
    set ``z_end = N``.
    """

    a: float
    window: tuple
    z_end: int | None = None

    def __post_init__(self):
        i_s, i_t = self.window
        if self.a < 0:
            raise ValueError("a must be nonnegative")
        if not 0 <= i_s <= i_t:
            raise ValueError(f"invalid window {self.window}")
        if self.z_end is not None and self.z_end < i_t:
            raise ValueError("z_end must not precede the window end")


def _z_part(z: TriangularField, a: float, i_s: int, i_t: int, z_end: int) -> float:
    grid = z.grid
    t = grid.times
    total = 0.0
    for i in range(i_s, i_t):
        cells = z.row(i)[: z_end - i]
        sq = np.einsum("jmkd,jmkd->j", cells, cells) / z.n_paths
        total += float(np.dot(np.exp(a * t[i:z_end]), sq))
    return total * grid.dt ** 2


def _y_part(y: DiagonalProcess, a: float, i_s: int, i_t: int) -> float:
    grid = y.grid
    yv = y.values[i_s:i_t]
    sq = np.einsum("imk,imk->i", yv, yv) / y.n_paths
    return float(np.dot(np.exp(a * grid.times[i_s:i_t]), sq)) * grid.dt


def weighted_h2_norm(y: DiagonalProcess, z: TriangularField, p: WeightedNormParams) -> float:
    """Ensemble estimate of the squared e^{at}-weighted H^2 norm of (y, z) on the window."""
    if y.grid != z.grid:
        raise ValueError("y and z live on different grids")
    i_s, i_t = p.window
    z_end = i_t if p.z_end is None else p.z_end
    if max(i_t, z_end) > y.grid.n_steps:
        raise ValueError(f"window {p.window} exceeds the grid")
    return _y_part(y, p.a, i_s, i_t) + _z_part(z, p.a, i_s, i_t, z_end)


def relative_l2_error(estimate, reference) -> float:
    """sqrt(||estimate - reference||^2 / ||reference||^2), unweighted, over the whole grid.

    Both arguments are DiagonalProcess or both TriangularField; nan when the
    reference vanishes.
    """
    N = reference.grid.n_steps
    if isinstance(reference, DiagonalProcess):
        diff = DiagonalProcess(reference.grid, estimate.values - reference.values)
        num, den = _y_part(diff, 0.0, 0, N), _y_part(reference, 0.0, 0, N)
    else:
        diff = TriangularField(reference.grid, estimate.values - reference.values)
        num, den = _z_part(diff, 0.0, 0, N, N), _z_part(reference, 0.0, 0, N, N)
    return float(np.sqrt(num / den)) if den > 0 else float("nan")
