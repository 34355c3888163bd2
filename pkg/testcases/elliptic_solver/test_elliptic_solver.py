import math

import numpy as np
import pytest
from scipy.linalg import eigvalsh
from scipy.sparse.linalg import spsolve

from ckn_lab.core.ckn_params import validate
from ckn_lab.core.discrete_fields import BoxGrid, DiscreteField, RadialGrid, dirichlet_energy
from ckn_lab.core.elliptic_solver import (
    assemble,
    bubble_solution,
    dilate,
    exact_radial_mms,
    harmonic_replacement,
    residual_norm,
    solve,
    solve_dirichlet,
    stiffness_matrix,
)
from ckn_lab.core.weighted_measure import BallSpec
from ckn_lab.errors import BallOutsideDomain, BallTooSmall, DegenerateExponent

ORIGIN = (0.0, 0.0, 0.0)


@pytest.fixture
def plain():
    return validate(3, 0.0, 0.0)


def _zero(grid, params):
    return DiscreteField(grid, np.zeros(grid.node_count), "zero", params)


def _mms_error(params, n, gamma=0.0, tol=1e-13):
    profile, f = exact_radial_mms(params, gamma, 1.0)
    grid = RadialGrid(3, 0.0, 1.0, n)
    load = DiscreteField.sample(grid, f, "f", params)
    u, report = solve_dirichlet(params, grid, load, 0.0, tol=tol)
    assert report.converged
    return float(np.max(np.abs(u.values - profile(grid.radii))))


@pytest.mark.parametrize("kappa", [0.0, 0.5, -1.0])
def test_stiffness_is_symmetric_with_zero_row_sums(kappa):
    for grid in (RadialGrid(3, 0.0, 1.0, 12), BoxGrid.cube(1.0, 4)):
        K = stiffness_matrix(grid, kappa)
        assert abs(K - K.T).max() == 0.0
        assert np.allclose(K @ np.ones(grid.node_count), 0.0, atol=1e-12)


def test_zero_data_needs_no_iterations(plain):
    grid = RadialGrid(3, 0.0, 1.0, 16)
    u, report = solve_dirichlet(plain, grid, _zero(grid, plain))
    assert report.iterations == 0
    assert report.converged
    assert not np.any(u.values)


def test_boundary_values_are_imposed(plain):
    grid = BoxGrid.cube(1.0, 4)
    g = DiscreteField.sample(grid, lambda x: x[:, 0] + 2.0 * x[:, 1], "g", plain)
    u, report = solve_dirichlet(plain, grid, _zero(grid, plain), g, tol=1e-12)
    assert report.converged
    mask = grid.boundary_mask()
    assert np.array_equal(u.values[mask], g.values[mask])
    # linear data is reproduced by the P1 scheme
    assert np.allclose(u.values, g.values, atol=1e-10)


def test_stalled_solve_is_flagged(plain):
    grid = RadialGrid(3, 0.0, 1.0, 64)
    one = DiscreteField(grid, np.ones(grid.node_count), "one", plain)
    _, report = solve(assemble(plain, grid, one), tol=1e-14, max_iter=2)
    assert not report.converged
    assert report.iterations == 2


def test_plain_mms_is_second_order(plain):
    coarse = _mms_error(plain, 32)
    fine = _mms_error(plain, 64)
    assert fine < 1e-3
    assert 1.7 <= math.log2(coarse / fine) <= 2.6


def test_weighted_mms_on_the_ball_is_second_order():
    params = validate(3, 0.25, 0.25, holder_mode=False)
    coarse = _mms_error(params, 256, gamma=1.0, tol=1e-12)
    fine = _mms_error(params, 512, gamma=1.0, tol=1e-12)
    assert fine <= 1e-5
    assert 1.8 <= math.log2(coarse / fine) <= 2.5


def test_weighted_mms_linear_in_r_is_reproduced():
    params = validate(3, 0.25, 0.25, holder_mode=False)
    assert _mms_error(params, 32) <= 1e-9


def test_radial_load_of_one_is_the_weighted_volume():
    params = validate(3, 0.25, 0.5)
    grid = RadialGrid(3, 0.0, 1.0, 40)
    one = DiscreteField(grid, np.ones(grid.node_count), "one", params)
    system = assemble(params, grid, one)
    assert system.load.sum() == pytest.approx(4.0 * math.pi / (3.0 - params.bp), rel=1e-12)
    assert np.all(system.load > 0.0)


def test_solve_agrees_with_a_direct_solve():
    params = validate(3, 0.25, 0.5)
    grid = BoxGrid.cube(1.0, 6)
    f = DiscreteField.sample(grid, lambda x: 1.0 + x[:, 0] ** 2, "f", params)
    system = assemble(params, grid, f, 0.5)
    u, report = solve(system, tol=1e-13)
    assert report.converged
    assert np.allclose(u.values, spsolve(system.matrix.tocsc(), system.rhs), rtol=0.0, atol=1e-10)


def test_discrete_maximum_principle():
    params = validate(3, 0.25, 0.5)
    grid = BoxGrid.cube(1.0, 8)
    g = DiscreteField.sample(grid, lambda x: np.sin(3.0 * x[:, 0]) + x[:, 1] * x[:, 2], "g", params)
    u, report = solve_dirichlet(params, grid, _zero(grid, params), g, tol=1e-13)
    assert report.converged
    trace = g.values[grid.boundary_mask()]
    assert trace.min() - 1e-10 <= u.values.min()
    assert u.values.max() <= trace.max() + 1e-10


def test_mms_profile_matches_closed_form(plain):
    profile, f = exact_radial_mms(plain, 0.0, 1.0)
    r = np.array([0.0, 0.5, 1.0])
    assert np.allclose(profile(r), (1.0 - r**2) / 6.0)
    assert np.allclose(profile.derivative(r), -r / 3.0)
    assert np.allclose(f(r), 1.0)


def test_mms_degenerate_exponent():
    params = validate(3, 0.0, 0.0)
    with pytest.raises(DegenerateExponent):
        exact_radial_mms(params, -2.0, 1.0)
    with pytest.raises(DegenerateExponent):
        exact_radial_mms(params, -3.0, 1.0)


def test_harmonic_replacement_is_constant_in_centred_ball(plain):
    grid = RadialGrid(3, 0.0, 1.0, 16)
    u = DiscreteField.sample(grid, lambda r: r**2, "r2", plain)
    ball = BallSpec(ORIGIN, 0.5)
    w = harmonic_replacement(plain, u, ball, tol=1e-13)
    inside = grid.ball_mask(ball)
    assert np.allclose(w.values[inside], 0.25, atol=1e-10)
    assert np.array_equal(w.values[~inside], u.values[~inside])


def test_harmonic_replacement_energy_identities():
    params = validate(3, 0.25, 0.5)
    grid = BoxGrid.cube(1.0, 8)
    u = DiscreteField.sample(grid, lambda x: np.sin(2.0 * x[:, 0]) + x[:, 1] * x[:, 2], "u", params)
    ball = BallSpec((0.25, 0.0, 0.0), 0.5)
    w = harmonic_replacement(params, u, ball, tol=1e-13)
    e_u = dirichlet_energy(params, u)
    e_w = dirichlet_energy(params, w)
    e_diff = dirichlet_energy(params, u.with_values(u.values - w.values))
    assert e_w <= e_u
    assert e_u == pytest.approx(e_w + e_diff, rel=1e-8)
    again = harmonic_replacement(params, w, ball, tol=1e-13)
    assert np.allclose(again.values, w.values, atol=1e-9)


def test_harmonic_replacement_rejections(plain):
    grid = RadialGrid(3, 0.0, 1.0, 16)
    u = DiscreteField.sample(grid, lambda r: r**2, "r2", plain)
    with pytest.raises(BallOutsideDomain):
        harmonic_replacement(plain, u, BallSpec((0.2, 0.0, 0.0), 0.3))
    with pytest.raises(BallOutsideDomain):
        harmonic_replacement(plain, u, BallSpec(ORIGIN, 1.5))
    with pytest.raises(BallTooSmall):
        harmonic_replacement(plain, u, BallSpec(ORIGIN, 0.07))


def test_fundamental_solution_residual_shrinks():
    params = validate(3, 0.4, 0.4, holder_mode=False)
    exponent = 2.0 + 0.8 - 3.0
    norms = []
    for n in (32, 64, 128):
        grid = RadialGrid(3, 0.5, 2.0, n)
        u = DiscreteField.sample(grid, lambda r: np.power(r, exponent), "fundamental", params)
        norms.append(residual_norm(params, u, _zero(grid, params), 1e-13))
    assert norms[0] / norms[1] >= 3.3
    assert norms[1] / norms[2] >= 3.3


def test_bubble_constants():
    bubble = bubble_solution(validate(3, 0.0, 0.0))
    assert bubble.theta == pytest.approx(2.0)
    assert bubble.K == pytest.approx(3.0)
    r = np.array([0.0, 1.0, 3.0])
    assert np.allclose(bubble.profile(r), (1.0 + r**2) ** -0.5)
    assert np.allclose(bubble.profile.derivative(r), -r * (1.0 + r**2) ** -1.5)


def test_dilate_scales_value_and_derivative():
    params = validate(3, 0.0, 0.0)
    bubble = bubble_solution(params)
    scaled = dilate(params, bubble.profile, 4.0)
    r = np.array([0.0, 0.25, 1.0])
    assert np.allclose(scaled(r), 2.0 * bubble.profile(4.0 * r))
    assert np.allclose(scaled.derivative(r), 8.0 * bubble.profile.derivative(4.0 * r))
    with pytest.raises(ValueError):
        dilate(params, bubble.profile, 0.0)


def test_dilated_bubble_residual_is_second_order():
    params = validate(3, 0.0, 0.0)
    bubble = bubble_solution(params)
    profile = dilate(params, bubble.profile, 2.0)
    norms = []
    for n in (64, 128):
        grid = RadialGrid(3, 0.0, 2.0, n)
        u = DiscreteField.sample(grid, profile, "bubble", params)
        f = u.with_values(bubble.K * u.values**5)
        norms.append(residual_norm(params, u, f, 1e-13))
    assert math.log2(norms[0] / norms[1]) >= 1.8


@pytest.mark.parametrize("a, b", [(0.0, 0.0), (0.25, 0.5), (-0.5, -0.2)])
def test_assembled_system_is_spd(a, b):
    params = validate(3, a, b)
    for grid in (RadialGrid(3, 0.0, 1.0, 12), BoxGrid.cube(1.0, 4)):
        system = assemble(params, grid, _zero(grid, params))
        dense = system.matrix.toarray()
        assert np.array_equal(dense, dense.T)
        assert eigvalsh(dense)[0] > 0.0
        assert eigvalsh(system.interior_matrix.toarray())[0] > 0.0


def test_harmonic_replacement_keeps_the_fundamental_solution():
    params = validate(3, 0.25, 0.25, holder_mode=False)
    grid = BoxGrid((0.25, -0.5, -0.5), (1.25, 0.5, 0.5), (16, 16, 16))
    u = DiscreteField.sample(grid, lambda x: np.linalg.norm(x, axis=1) ** -0.5, "fundamental", params)
    ball = BallSpec((0.75, 0.0, 0.0), 0.4)
    w = harmonic_replacement(params, u, ball, tol=1e-13)
    inside = grid.ball_mask(ball)
    assert np.max(np.abs(w.values - u.values)[inside]) <= 1e-2 * np.max(u.values[inside])
    assert np.array_equal(w.values[~inside], u.values[~inside])
