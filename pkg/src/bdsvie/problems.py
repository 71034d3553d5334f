"""Problem specifications and a catalog of test problems with closed-form solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .calculus import DiagonalProcess, TriangularField
from .expr import evaluate, parse_expression


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of the Volterra equation and their Lipschitz metadata.

    ``f(t, s, y, z)`` returns ``(..., k)`` and ``g(t, s, y, z)`` returns
    ``(..., k, l)`` for ``y`` of shape ``(..., k)`` and ``z`` of shape
    ``(..., k, d)``; time arguments broadcast against the leading axes.
    ``xi(w)`` maps W-paths ``(M, N+1, d)`` to terminal values ``(M, k)``.

    ``C`` and ``alpha`` are the squared-form constants
    ``|df|^2 <= C(|dy|^2 + |dz|^2)`` and ``|dg|^2 <= C|dy|^2 + alpha|dz|^2``;
    they are supplied by the user, never inferred.
    """

    k: int
    d: int
    l: int  # noqa: E741
    f: Callable
    g: Callable
    xi: Callable
    C: float
    alpha: float
    T: float = 1.0
    name: str = "custom"
    sources: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        for dim in ("k", "d", "l"):
            if int(getattr(self, dim)) < 1:
                raise ValueError(f"dimension {dim} must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0,1)")
        if self.C < 0:
            raise ValueError("C must be nonnegative")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def dims(self):
        return (self.k, self.d, self.l)

    def terminal(self, ens) -> np.ndarray:
        xi = np.asarray(self.xi(ens.w), dtype=float).reshape(ens.n_paths, self.k)
        if not np.all(np.isfinite(xi)):
            raise FloatingPointError("terminal value is not finite")
        return xi


class ExpressionCoefficient:
    """Vectorised coefficient assembled from per-component expressions."""

    def __init__(self, texts, shape, slot, dims):
        self.shape = tuple(shape)
        self.texts = np.asarray(texts, dtype=object).reshape(self.shape)
        self.asts = [parse_expression(str(t), slot, dims) for t in self.texts.ravel()]
        self.k, self.d, self.l = dims

    def _env(self, t, s, y, z):
        env = {"t": t, "s": s}
        for r in range(self.k):
            env[f"y{r + 1}"] = y[..., r]
            for c in range(self.d):
                env[f"z{r + 1}{c + 1}"] = z[..., r, c]
        return env

    def __call__(self, t, s, y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        lead = np.broadcast_shapes(np.shape(t), np.shape(s), y.shape[:-1], z.shape[:-2])
        env = self._env(t, s, y, z)
        out = np.empty(lead + (len(self.asts),))
        for n, ast in enumerate(self.asts):
            out[..., n] = np.broadcast_to(evaluate(ast, env), lead)
        return out.reshape(lead + self.shape)


class TerminalExpression:
    def __init__(self, texts, dims):
        self.texts = list(texts)
        self.asts = [parse_expression(t, "xi", dims) for t in self.texts]
        self.d = dims[1]

    def __call__(self, w):
        wT = np.asarray(w)[:, -1, :]
        env = {"wT": wT[:, 0]} if self.d == 1 else {f"wT{c + 1}": wT[:, c] for c in range(self.d)}
        return np.stack([np.broadcast_to(evaluate(a, env), wT.shape[:1]) for a in self.asts], axis=-1)


def spec_from_expressions(f, g, xi, C, alpha, T=1.0, dims=(1, 1, 1), name="custom") -> ProblemSpec:
    """Build a ProblemSpec from expression strings.

    ``f`` is a list of k strings, ``g`` a k x l nested list, ``xi`` a list of k
    strings. A bare string is accepted when the corresponding shape is 1.
    """
    k, d, l = dims  # noqa: E741
    f = [f] if isinstance(f, str) else list(f)
    g = [[g]] if isinstance(g, str) else [[c] if isinstance(c, str) else list(c) for c in g]
    xi = [xi] if isinstance(xi, str) else list(xi)
    if len(f) != k or len(xi) != k:
        raise ValueError(f"f and xi need {k} component(s)")
    if len(g) != k or any(len(row) != l for row in g):
        raise ValueError(f"g needs {k} rows of {l} component(s)")
    return ProblemSpec(
        k=k, d=d, l=l,
        f=ExpressionCoefficient(f, (k,), "f", dims),
        g=ExpressionCoefficient(g, (k, l), "g", dims),
        xi=TerminalExpression(xi, dims),
        C=C, alpha=alpha, T=T, name=name,
        sources={"f": f, "g": g, "xi": xi},
    )


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    spec: ProblemSpec
    oracle: Optional[Callable] = None  # ens -> (DiagonalProcess, TriangularField)


def _lead(t, s, y, z):
    return np.broadcast_shapes(np.shape(t), np.shape(s), np.shape(y)[:-1], np.shape(z)[:-2])


def _zero_f(t, s, y, z):
    return np.zeros(_lead(t, s, y, z) + (1,))


def _zero_g(t, s, y, z):
    return np.zeros(_lead(t, s, y, z) + (1, 1))


def _scalar_field(ens, value_fn) -> TriangularField:
    M = ens.n_paths
    return TriangularField.from_function(ens.grid, lambda i, j: np.full((M, 1, 1), value_fn(i, j)))


def _martingale(T):
    spec = ProblemSpec(
        k=1, d=1, l=1,
        f=_zero_f,
        g=_zero_g,
        xi=lambda w: w[:, -1, :],
        C=0.0, alpha=0.5, T=T, name="martingale",
    )

    def oracle(ens):
        y = DiagonalProcess(ens.grid, np.transpose(ens.w, (1, 0, 2)).copy())
        return y, _scalar_field(ens, lambda i, j: 1.0)

    return CatalogEntry("martingale", spec, oracle)


def _backward_driver(T):
    spec = ProblemSpec(
        k=1, d=1, l=1,
        f=_zero_f,
        g=lambda t, s, y, z: np.ones(_lead(t, s, y, z) + (1, 1)),
        xi=lambda w: np.zeros((w.shape[0], 1)),
        C=0.0, alpha=0.5, T=T, name="backward-driver",
    )

    def oracle(ens):
        b = np.transpose(ens.b, (1, 0, 2))
        return DiagonalProcess(ens.grid, b[-1] - b), _scalar_field(ens, lambda i, j: 0.0)

    return CatalogEntry("backward-driver", spec, oracle)


def _linear_drift(T, rho):
    spec = ProblemSpec(
        k=1, d=1, l=1,
        f=lambda t, s, y, z: np.broadcast_to(-rho * np.asarray(y), _lead(t, s, y, z) + (1,)),
        g=_zero_g,
        xi=lambda w: w[:, -1, :],
        C=rho ** 2, alpha=0.5, T=T, name="linear-drift",
    )

    def oracle(ens):
        t = ens.grid.times
        decay = np.exp(-rho * (T - t))
        y = np.transpose(ens.w, (1, 0, 2)) * decay[:, None, None]
        return DiagonalProcess(ens.grid, y), _scalar_field(ens, lambda i, j: decay[j])

    return CatalogEntry("linear-drift", spec, oracle)


def _kernel(T, phi, psi, psi_integral):
    def f(t, s, y, z):
        value = phi(np.asarray(t, dtype=float)) * psi(np.asarray(s, dtype=float))
        return np.broadcast_to(np.asarray(value)[..., None], _lead(t, s, y, z) + (1,))

    spec = ProblemSpec(
        k=1, d=1, l=1,
        f=f,
        g=_zero_g,
        xi=lambda w: w[:, -1, :],
        C=0.0, alpha=0.5, T=T, name="kernel",
    )

    def oracle(ens):
        t = ens.grid.times
        shift = phi(t) * psi_integral(t, T)
        y = np.transpose(ens.w, (1, 0, 2)) + shift[:, None, None]
        return DiagonalProcess(ens.grid, y), _scalar_field(ens, lambda i, j: 1.0)

    return CatalogEntry("kernel", spec, oracle)


LIPSCHITZ_DEMO = {
    "f": "0.5*sin(y1+z11)",
    "g": "0.5*cos(y1)+0.5*z11",
    "xi": "sin(wT)",
}


def _lipschitz_demo(T):
    spec = spec_from_expressions(
        LIPSCHITZ_DEMO["f"], LIPSCHITZ_DEMO["g"], LIPSCHITZ_DEMO["xi"],
        C=0.25, alpha=0.5, T=T, name="lipschitz-demo",
    )
    return CatalogEntry("lipschitz-demo", spec, None)


CATALOG = ("martingale", "backward-driver", "linear-drift", "kernel", "lipschitz-demo")


def catalog_problem(name: str, T: float = 1.0, rho: float = 1.0, phi=None, psi=None,
                    psi_integral=None) -> CatalogEntry:
    """Look up a catalog problem; ``rho`` applies to linear-drift, ``phi/psi`` to kernel.

    The kernel defaults are phi(t) = t, psi(s) = 1; a custom psi needs its
    integral ``psi_integral(t, T)`` for the oracle.
    """
    if name == "martingale":
        return _martingale(T)
    if name == "backward-driver":
        return _backward_driver(T)
    if name == "linear-drift":
        return _linear_drift(T, rho)
    if name == "kernel":
        if psi is not None and psi_integral is None:
            raise ValueError("a custom psi needs psi_integral for the oracle")
        return _kernel(
            T,
            phi or (lambda t: t),
            psi or (lambda s: np.ones(np.shape(s))),
            psi_integral or (lambda t, T_: T_ - t),
        )
    if name == "lipschitz-demo":
        return _lipschitz_demo(T)
    raise KeyError(f"unknown catalog problem {name!r}; choose from {', '.join(CATALOG)}")
