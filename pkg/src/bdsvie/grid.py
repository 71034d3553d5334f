"""Time grids and reproducible Brownian ensembles for the two drivers W and B.

Each path draws its increments from its own Philox stream keyed by
``(seed, driver tag)`` with the path index in the counter, so path ``m`` is
the same whether the ensemble is generated serially or in parallel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

W_TAG = 0
B_TAG = 1
_UINT64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    end: float
    n_steps: int
    start: float = 0.0
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"horizon must be positive, got T={self.end}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        times = self.start + self.dt * np.arange(self.n_steps + 1, dtype=float)
        times[-1] = self.end
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def dt(self) -> float:
        return (self.end - self.start) / self.n_steps

    def index_of(self, t: float) -> int:
        """Nearest grid index to time ``t``."""
        i = int(round((t - self.start) / self.dt))
        if not 0 <= i <= self.n_steps:
            raise ValueError(f"time {t} lies outside [{self.start}, {self.end}]")
        return i


def make_grid(T: float, N: int) -> TimeGrid:
    return TimeGrid(end=float(T), n_steps=N)


@dataclass(frozen=True, eq=False)
class BrownianEnsemble:
    """M sampled paths of W (values in R^d) and B (values in R^l) on a grid.

    ``w`` has shape ``(M, N+1, d)`` and ``b`` has shape ``(M, N+1, l)``.
    """

    grid: TimeGrid
    w: np.ndarray
    b: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[2]

    @property
    def l(self) -> int:  # noqa: E743
        return self.b.shape[2]

    @cached_property
    def dw(self) -> np.ndarray:
        return np.diff(self.w, axis=1)

    @cached_property
    def db(self) -> np.ndarray:
        return np.diff(self.b, axis=1)

    def subsample(self, stride: int) -> "BrownianEnsemble":
        """Same paths observed on a grid ``stride`` times coarser."""
        N = self.grid.n_steps
        if stride < 1 or N % stride:
            raise ValueError(f"stride {stride} does not divide N={N}")
        grid = TimeGrid(end=self.grid.end, n_steps=N // stride, start=self.grid.start)
        return BrownianEnsemble(grid, self.w[:, ::stride].copy(), self.b[:, ::stride].copy(), self.seed)


def _path_increments(seed: int, tag: int, m: int, n: int, dim: int) -> np.ndarray:
    bitgen = np.random.Philox(key=[seed & _UINT64, tag], counter=[0, 0, m, 0])
    return np.random.Generator(bitgen).standard_normal((n, dim))


def _fill(out: np.ndarray, seed: int, tag: int, paths: range, scale: float) -> None:
    n, dim = out.shape[1] - 1, out.shape[2]
    for m in paths:
        out[m, 1:] = np.cumsum(scale * _path_increments(seed, tag, m, n, dim), axis=0)


def sample_ensemble(grid: TimeGrid, M: int, d: int = 1, l: int = 1, seed: int = 0,  # noqa: E741
                    threads: int = 1) -> BrownianEnsemble:
    if M < 1 or d < 1 or l < 1:
        raise ValueError("M, d and l must be positive")
    N = grid.n_steps
    scale = np.sqrt(grid.dt)
    w = np.zeros((M, N + 1, d))
    b = np.zeros((M, N + 1, l))
    jobs = [(w, W_TAG), (b, B_TAG)]
    if threads <= 1:
        for out, tag in jobs:
            _fill(out, seed, tag, range(M), scale)
    else:
        # each chunk writes a disjoint slice of paths; values do not depend on chunking
        chunk = -(-M // threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_fill, out, seed, tag, range(lo, min(lo + chunk, M)), scale)
                       for out, tag in jobs for lo in range(0, M, chunk)]
            for fut in futures:
                fut.result()
    w.setflags(write=False)
    b.setflags(write=False)
    return BrownianEnsemble(grid, w, b, int(seed))
