"""JSON run configuration: strict parsing and validation before any computation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .certificate import CertificateError, build_certificate
from .problems import CATALOG, catalog_problem, spec_from_expressions
from .regression import n_features
from .verify import DEFAULT_ORACLES, OracleSetting

CHECKS = ("certificate", "apriori", "uniqueness", "contraction", "oracles")


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    catalog: str | None = None
    rho: float | None = None
    dims: list | None = None
    f: object = None
    g: object = None
    xi: object = None
    C: float | None = None
    alpha: float | None = None
    T: float = 1.0


@dataclass
class SolverSettings:
    N: int = 32
    M: int = 8192
    degree: int = 2
    ridge: float | None = None
    theta: float | None = None
    a: float | None = None
    partition: list | None = None
    n_intervals: int | None = None
    tol: float = 1e-4
    max_iter: int = 25
    seed: int = 42


@dataclass
class OutputSettings:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])
    timings: bool = False


@dataclass
class VerifySettings:
    checks: list = field(default_factory=lambda: list(CHECKS))
    apriori_slack: float = 1.1
    ratio_slack: float = 0.1
    uniqueness_factor: float = 10.0
    oracles: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    problem: ProblemConfig
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)

    def to_dict(self) -> dict:
        return asdict(self)

    def build_problem(self):
        """The ProblemSpec, or a CatalogEntry's spec when a catalog name is given."""
        return build_problem(self.problem)

    def certificate(self, spec):
        s = self.solver
        return build_certificate(spec.C, spec.alpha, spec.T, theta=s.theta, a=s.a,
                                 partition=s.partition, n_intervals=s.n_intervals, grid_steps=s.N)


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**data)


def build_problem(p: ProblemConfig):
    if p.catalog is not None:
        if any(v is not None for v in (p.dims, p.f, p.g, p.xi)):
            raise ConfigError("problem: give either a catalog name or expressions, not both")
        if p.catalog not in CATALOG:
            raise ConfigError(f"unknown catalog problem {p.catalog!r}; choose from {', '.join(CATALOG)}")
        kwargs = {"T": p.T}
        if p.rho is not None:
            kwargs["rho"] = p.rho
        entry = catalog_problem(p.catalog, **kwargs)
        spec = entry.spec
        if p.C is not None or p.alpha is not None:
            spec = replace(spec, C=spec.C if p.C is None else p.C,
                           alpha=spec.alpha if p.alpha is None else p.alpha)
        return spec
    if p.f is None or p.g is None or p.xi is None:
        raise ConfigError("problem: expressions f, g and xi are required without a catalog name")
    if p.C is None or p.alpha is None:
        raise ConfigError("problem: Lipschitz constants C and alpha are required")
    dims = tuple(p.dims or (1, 1, 1))
    if len(dims) != 3:
        raise ConfigError("problem.dims must be [k, d, l]")
    return spec_from_expressions(p.f, p.g, p.xi, C=p.C, alpha=p.alpha, T=p.T, dims=dims)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - {"problem", "solver", "output", "verify"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "problem" not in data:
        raise ConfigError("configuration needs a 'problem' section")
    cfg = RunConfig(
        problem=_strict(ProblemConfig, data["problem"], "problem"),
        solver=_strict(SolverSettings, data.get("solver", {}), "solver"),
        output=_strict(OutputSettings, data.get("output", {}), "output"),
        verify=_strict(VerifySettings, data.get("verify", {}), "verify"),
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Check every precondition the solver would otherwise hit mid-run; returns the ProblemSpec."""
    s = cfg.solver
    for name in ("N", "M", "max_iter"):
        value = getattr(s, name)
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f"solver.{name} must be a positive integer")
    if not isinstance(s.degree, int) or s.degree < 0:
        raise ConfigError("solver.degree must be a nonnegative integer")
    if not s.tol > 0:
        raise ConfigError("solver.tol must be positive")
    if s.ridge is not None and s.ridge < 0:
        raise ConfigError("solver.ridge must be nonnegative")
    bad = sorted(set(cfg.verify.checks) - set(CHECKS))
    if bad:
        raise ConfigError(f"unknown check(s): {', '.join(bad)}; choose from {', '.join(CHECKS)}")
    for name, override in cfg.verify.oracles.items():
        if name not in DEFAULT_ORACLES:
            raise ConfigError(f"verify.oracles: no closed-form oracle for {name!r}")
        if not isinstance(override, dict):
            raise ConfigError(f"verify.oracles.{name} must be a JSON object")
        _strict(OracleSetting, {**asdict(DEFAULT_ORACLES[name]), **override}, f"verify.oracles.{name}")
    bad = sorted(set(cfg.output.formats) - {"csv", "json"})
    if bad:
        raise ConfigError(f"unknown output format(s): {', '.join(bad)}")
    try:
        spec = build_problem(cfg.problem)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"problem: {exc}") from exc
    if s.M < n_features(spec.d, spec.l, s.degree):
        raise ConfigError(f"solver.M={s.M} is below the number of regression features "
                          f"({n_features(spec.d, spec.l, s.degree)})")
    try:
        cfg.certificate(spec)
    except CertificateError as exc:
        raise ConfigError(f"certificate: {exc}") from exc
    return spec


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data)
