"""Monte Carlo solver for backward doubly stochastic Volterra integral equations."""

from .bdsde import BdsdeConfig, BdsdeDrivers, solve_bdsde
from .calculus import (
    DiagonalProcess,
    TriangularField,
    WeightedNormParams,
    backward_ito_sum,
    forward_ito_sum,
    riemann_sum,
    weighted_h2_norm,
)
from .certificate import ContractionCertificate, build_certificate
from .grid import BrownianEnsemble, TimeGrid, make_grid, sample_ensemble
from .problems import ProblemSpec, catalog_problem, spec_from_expressions
from .regression import RegressionOperator, build_basis, estimate_conditional, estimate_martingale_coefficient
from .solver import (
    FrozenField,
    SolutionEstimate,
    apply_theta,
    picard_solve,
    solve_frozen_bdsvie,
    stitched_solve,
)

__all__ = [
    "BdsdeConfig", "BdsdeDrivers", "solve_bdsde",
    "DiagonalProcess", "TriangularField", "WeightedNormParams",
    "backward_ito_sum", "forward_ito_sum", "riemann_sum", "weighted_h2_norm",
    "ContractionCertificate", "build_certificate",
    "BrownianEnsemble", "TimeGrid", "make_grid", "sample_ensemble",
    "ProblemSpec", "catalog_problem", "spec_from_expressions",
    "RegressionOperator", "build_basis", "estimate_conditional", "estimate_martingale_coefficient",
    "FrozenField", "SolutionEstimate", "apply_theta", "picard_solve", "solve_frozen_bdsvie", "stitched_solve",
]
