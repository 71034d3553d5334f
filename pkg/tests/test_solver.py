import numpy as np
import pytest

from bdsvie.calculus import relative_l2_error
from bdsvie.certificate import build_certificate
from bdsvie.grid import make_grid, sample_ensemble
from bdsvie.problems import catalog_problem, spec_from_expressions
from bdsvie.regression import RegressionOperator
from bdsvie.solver import (
    FrozenField,
    apply_theta,
    direct_conditional_y,
    field_distance_sq,
    fixed_point_residual,
    partition_indices,
    picard_solve,
    solve_frozen_bdsvie,
    stitched_solve,
)
from bdsvie.verify import geometric_iteration_bound, measure_contraction_ratios


@pytest.fixture(scope="module")
def demo():
    return catalog_problem("lipschitz-demo").spec


def test_frozen_martingale(ens32, op32):
    entry = catalog_problem("martingale")
    y_ref, z_ref = entry.oracle(ens32)
    Y, Z = solve_frozen_bdsvie(entry.spec, ens32, FrozenField.zeros(ens32, 1), (0, 32),
                               entry.spec.terminal(ens32), op32)
    assert relative_l2_error(Y, y_ref) <= 0.05
    assert relative_l2_error(Z, z_ref) <= 0.05


def test_frozen_kernel(ens32, op32):
    entry = catalog_problem("kernel")
    y_ref, _ = entry.oracle(ens32)
    Y, _ = solve_frozen_bdsvie(entry.spec, ens32, FrozenField.zeros(ens32, 1), (0, 32),
                               entry.spec.terminal(ens32), op32)
    sup = np.sqrt(np.max(np.mean((Y.values - y_ref.values) ** 2, axis=(1, 2))))
    assert sup <= 0.03


def test_frozen_zero_solution(ens32, op32):
    # f(t,s,0,0) = 0.5 sin 0 = 0, but g(t,s,0,0) = 0.5, so use a driver that vanishes at zero
    spec = spec_from_expressions("0.5*sin(y1+z11)", "0.5*sin(y1)+0.5*z11", "0*wT", C=0.25, alpha=0.5)
    zero = FrozenField.zeros(ens32, 1)
    Y, Z = solve_frozen_bdsvie(spec, ens32, zero, (0, 32), np.zeros((ens32.n_paths, 1)), op32)
    assert np.max(np.abs(Y.values)) <= 1e-3 and np.max(np.abs(Z.values)) <= 1e-3


def test_frozen_rows_outside_window_untouched(small_ens, demo):
    init = FrozenField.constant(small_ens, np.full((512, 1), 9.0))
    Y, Z = solve_frozen_bdsvie(demo, small_ens, init, (2, 5), demo.terminal(small_ens))
    assert np.all(Y.values[:2] == 9.0) and np.all(Y.values[5:8] == 9.0)
    np.testing.assert_array_equal(Y.values[8], demo.terminal(small_ens))
    assert np.all(Z.row(0) == 0) and np.all(Z.row(6) == 0)
    assert not np.any(Z.row(2) == 0)


def test_theta_constant_when_drivers_ignore_unknowns(ens32, op32):
    spec = catalog_problem("kernel").spec
    xi = spec.terminal(ens32)
    a = apply_theta(spec, ens32, FrozenField.zeros(ens32, 1), (0, 32), xi, op32)
    rng = np.random.default_rng(0)
    other = FrozenField.zeros(ens32, 1)
    other.y.values[:] = rng.normal(size=other.y.values.shape)
    other.z.values[:] = rng.normal(size=other.z.values.shape)
    b = apply_theta(spec, ens32, other, (0, 32), xi, op32)
    assert a.y.values.tobytes() == b.y.values.tobytes()
    assert a.z.values.tobytes() == b.z.values.tobytes()


def test_theta_of_oracle_is_close(ens32, op32):
    entry = catalog_problem("martingale")
    y_ref, z_ref = entry.oracle(ens32)
    image = apply_theta(entry.spec, ens32, FrozenField(y_ref, z_ref), (0, 32), entry.spec.terminal(ens32), op32)
    assert relative_l2_error(image.y, y_ref) <= 0.05
    assert relative_l2_error(image.z, z_ref) <= 0.05


def test_direct_conditional_matches_recursion(ens32, op32, demo):
    xi = demo.terminal(ens32)
    rng = np.random.default_rng(1)
    frozen = FrozenField.constant(ens32, xi)
    frozen.z.values[:] = 0.3 + 0.1 * rng.normal(size=frozen.z.values.shape)
    Y, _ = solve_frozen_bdsvie(demo, ens32, frozen, (0, 32), xi, op32)
    for i in (4, 16, 28):
        direct = direct_conditional_y(demo, ens32, frozen, i, xi, op32)
        rel = np.sqrt(np.mean((direct - Y.values[i]) ** 2) / np.mean(Y.values[i] ** 2))
        assert rel <= 0.05


def test_picard_contraction_on_half_window(ens32, op32, demo):
    cert = build_certificate(demo.C, demo.alpha, demo.T)
    est = picard_solve(demo, ens32, (16, 32), demo.terminal(ens32), cert, tol=1e-4, max_iter=25, operator=op32)
    assert est.converged and est.residuals[0][-1] <= 1e-4
    ratios = measure_contraction_ratios(est.residuals[0], cert.lambda_factor)
    assert ratios.passed, ratios.ratios


def test_picard_constant_map_converges_at_once(ens32, op32):
    spec = catalog_problem("kernel").spec
    cert = build_certificate(spec.C, spec.alpha, spec.T)
    est = picard_solve(spec, ens32, (0, 32), spec.terminal(ens32), cert, operator=op32)
    assert est.converged and est.iterations == [2]
    assert est.residuals[0][1] == 0.0


def test_picard_from_oracle(ens32, op32):
    entry = catalog_problem("martingale")
    cert = build_certificate(0.0, 0.5, 1.0)
    y_ref, z_ref = entry.oracle(ens32)
    est = picard_solve(entry.spec, ens32, (0, 32), entry.spec.terminal(ens32), cert,
                       init=FrozenField(y_ref, z_ref), operator=op32)
    # first residual is the distance from the oracle to its image: pure regression noise
    oracle_norm = np.sqrt(field_distance_sq(FrozenField(y_ref, z_ref), FrozenField.zeros(ens32, 1),
                                            cert.a, (0, 32)))
    assert est.residuals[0][0] <= 0.05 * oracle_norm


def test_picard_preconditions(small_ens, demo):
    cert = build_certificate(1.0, 0.5, 1.0, theta=3.0)
    with pytest.raises(ValueError, match="certified step"):
        picard_solve(demo, small_ens, (0, 8), demo.terminal(small_ens), cert)
    with pytest.raises(ValueError):
        picard_solve(demo, small_ens, (0, 4), demo.terminal(small_ens), cert, tol=0.0)
    with pytest.raises(ValueError):
        picard_solve(demo, small_ens, (4, 4), demo.terminal(small_ens), cert)


def test_exhaustion_is_not_an_error(small_ens, demo):
    cert = build_certificate(demo.C, demo.alpha, demo.T)
    est = picard_solve(demo, small_ens, (0, 8), demo.terminal(small_ens), cert, tol=1e-15, max_iter=3)
    assert not est.converged and len(est.residuals[0]) == 3


def test_stitched_single_interval_equals_picard(ens32, op32, demo):
    cert = build_certificate(demo.C, demo.alpha, demo.T)
    assert len(cert.partition) == 2
    a = stitched_solve(demo, ens32, cert, operator=op32)
    b = picard_solve(demo, ens32, (0, 32), demo.terminal(ens32), cert, operator=op32)
    assert a.y.values.tobytes() == b.y.values.tobytes()
    assert a.z.values.tobytes() == b.z.values.tobytes()
    assert a.residuals == b.residuals


def test_stitched_two_intervals_martingale(ens32, op32):
    entry = catalog_problem("martingale")
    cert = build_certificate(0.0, 0.5, 1.0, partition=[1.0, 0.5, 0.0])
    sol = stitched_solve(entry.spec, ens32, cert, operator=op32)
    y_ref, z_ref = entry.oracle(ens32)
    assert sol.windows == [(16, 32), (0, 16)]
    assert relative_l2_error(sol.y, y_ref) <= 0.05
    assert relative_l2_error(sol.z, z_ref) <= 0.05


def test_stitched_demo_two_strips(ens32, op32, demo):
    cert = build_certificate(demo.C, demo.alpha, demo.T, partition=[1.0, 0.5, 0.0])
    sol = stitched_solve(demo, ens32, cert, tol=1e-4, operator=op32)
    assert sol.converged
    assert fixed_point_residual(demo, ens32, sol.field, cert.a, op32) <= 3e-4
    # agrees with the single-strip solution
    single = stitched_solve(demo, ens32, build_certificate(demo.C, demo.alpha, demo.T), operator=op32)
    assert np.sqrt(field_distance_sq(sol.field, single.field, cert.a, (0, 32))) <= 1e-3


def test_partition_must_land_on_grid(small_ens):
    cert = build_certificate(0.0, 0.5, 1.0, partition=[1.0, 0.51, 0.5, 0.0])
    with pytest.raises(ValueError):
        partition_indices(cert, small_ens.grid)


def test_uniqueness_from_two_starts(ens32, op32, demo):
    cert = build_certificate(demo.C, demo.alpha, demo.T)
    xi = demo.terminal(ens32)
    a = stitched_solve(demo, ens32, cert, 1e-4, 25, FrozenField.zeros(ens32, 1), op32)
    b = stitched_solve(demo, ens32, cert, 1e-4, 25, FrozenField.constant(ens32, xi), op32)
    assert np.sqrt(field_distance_sq(a.field, b.field, cert.a, (0, 32))) <= 1e-3


def test_iteration_count_within_geometric_bound(ens32, op32, demo):
    cert = build_certificate(demo.C, demo.alpha, demo.T)
    est = stitched_solve(demo, ens32, cert, tol=1e-4, operator=op32)
    r = est.residuals[0]
    assert len(r) <= geometric_iteration_bound(r[0] ** 2, cert.lambda_factor, 1e-4)


def test_deterministic(small_ens, demo):
    cert = build_certificate(demo.C, demo.alpha, demo.T)
    a = stitched_solve(demo, small_ens, cert)
    b = stitched_solve(demo, small_ens, cert)
    assert a.y.values.tobytes() == b.y.values.tobytes()


def test_certificate_grid_mismatch(demo):
    ens = sample_ensemble(make_grid(2.0, 8), 100, seed=0)
    with pytest.raises(ValueError, match="grid ends"):
        stitched_solve(demo, ens, build_certificate(demo.C, demo.alpha, 1.0))
