import math

import numpy as np
import pytest

from ckn_lab.core.ckn_params import LimitingBranch, validate
from ckn_lab.core.discrete_fields import BoxGrid, DiscreteField, RadialGrid
from ckn_lab.core.elliptic_solver import solve_dirichlet
from ckn_lab.core.regularity_analyzer import (
    GrowthProfile,
    Normalization,
    ProfileKind,
    campanato_profile,
    default_radii,
    fit_growth,
    gradient_profile,
    holder_quotient,
    mean_value_convergence,
    regularity_report,
)
from ckn_lab.errors import EmptySubdomain, InsufficientPoints
from ckn_lab.experiments.inequalities import fundamental_alpha_h
from ckn_lab.experiments.regularity import constructed_field_alpha, mean_value_rates

ORIGIN = (0.0, 0.0, 0.0)
RADII = np.array([0.4, 0.2, 0.1, 0.05])


def _profile(values, kind=ProfileKind.CAMPANATO, radii=RADII):
    return GrowthProfile(ORIGIN, radii, values, kind, radii**3)


def test_growth_profile_validation():
    with pytest.raises(ValueError):
        _profile(RADII, radii=RADII[::-1])
    with pytest.raises(ValueError):
        _profile(np.array([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        GrowthProfile(ORIGIN, RADII, RADII, ProfileKind.CAMPANATO, RADII[:2])


def test_fit_growth_readouts():
    campanato = _profile(RADII**4)
    fit = fit_growth(campanato)
    assert fit.exponent == pytest.approx(1.0)
    assert fit.alpha == pytest.approx(0.5)
    assert not fit.clamped
    assert fit.rms_residual < 1e-12
    raw = fit_growth(campanato, Normalization.RAW)
    assert raw.exponent == pytest.approx(4.0)
    assert raw.alpha == 1.0
    assert raw.clamped
    gradient = fit_growth(_profile(RADII**2.5, ProfileKind.GRADIENT_ENERGY), "measure_normalized")
    assert gradient.alpha == pytest.approx(0.75)


def test_fit_growth_drops_zero_entries():
    fit = fit_growth(_profile(np.array([0.4**4, 0.2**4, 0.1**4, 0.0])))
    assert fit.dropped == 1
    assert fit.alpha == pytest.approx(0.5)
    with pytest.raises(InsufficientPoints):
        fit_growth(_profile(np.array([1.0, 0.5, 0.0, 0.0])))


def test_campanato_readout_of_square_root_profile():
    params = validate(3, 0.25, 0.25)
    grid = RadialGrid(3, 0.0, 1.0, 512)
    u = DiscreteField.sample(grid, np.sqrt, "sqrt_r", params)
    fit = fit_growth(campanato_profile(params, u, ORIGIN, RADII))
    assert fit.alpha == pytest.approx(0.5, abs=0.03)


def test_holder_quotient_of_linear_field():
    params = validate(3, 0.0, 0.0)
    grid = BoxGrid.cube(1.0, 8)
    u = DiscreteField.sample(grid, lambda x: x[:, 0], "x1", params)
    quotient = holder_quotient(u, 0.25, 1.0)
    assert quotient.seminorm == pytest.approx(1.0, rel=1e-12)
    assert quotient.sup_norm == pytest.approx(0.75)
    i, j = quotient.pair
    assert grid.points[i][1:].tolist() == grid.points[j][1:].tolist()
    with pytest.raises(EmptySubdomain):
        holder_quotient(u, 2.0, 1.0)
    with pytest.raises(ValueError):
        holder_quotient(u, 0.25, 0.0)
    with pytest.raises(ValueError):
        holder_quotient(u, 0.0, 0.5)


def test_default_radii():
    assert default_radii(RadialGrid(3, 0.0, 1.0, 64), ORIGIN) == [0.5, 0.25, 0.125]
    with pytest.raises(InsufficientPoints):
        default_radii(RadialGrid(3, 0.0, 1.0, 16), ORIGIN)
    radii = default_radii(BoxGrid.cube(1.0, 32), (0.5, 0.0, 0.0), min_cells=1.0)
    assert radii[0] == pytest.approx(0.25)
    assert all(b == pytest.approx(a / 2.0) for a, b in zip(radii, radii[1:]))


def test_mean_value_of_constant_is_exact():
    params = validate(3, 0.0, 0.0)
    grid = RadialGrid(3, 0.0, 1.0, 32)
    one = DiscreteField(grid, np.ones(grid.node_count), "one", params)
    assert mean_value_convergence(params, one, [ORIGIN], [0.4, 0.2, 0.1]) == [math.inf]


def test_regularity_report_for_bounded_data():
    params = validate(3, 0.0, 0.0)
    grid = RadialGrid(3, 0.0, 1.0, 128)
    f = DiscreteField(grid, np.ones(grid.node_count), "one", params)
    u, report = solve_dirichlet(params, grid, f, 0.0, tol=1e-13)
    assert report.converged
    result = regularity_report(params, u, f, math.inf, ORIGIN, None, 1.0)
    assert result.alpha_predicted_sup == 1.0
    assert result.limiting_branch is LimitingBranch.UNIT
    assert result.alpha_measured == 1.0
    assert result.fit.clamped
    assert result.passed
    assert result.data_norm == 1.0
    assert result.sup_norm == pytest.approx(float(np.max(u.values)), rel=1e-12)
    assert list(result.to_record()) == [
        "alpha_measured",
        "alpha_predicted_sup",
        "limiting_branch",
        "holder_seminorm",
        "sup_norm",
        "pass",
    ]
    assert result.to_record()["limiting_branch"] == "unit"


def test_regularity_report_flags_a_decaying_profile():
    params = validate(3, 0.0, 0.0)
    grid = RadialGrid(3, 0.0, 1.0, 256)
    u = DiscreteField.sample(grid, lambda r: (r + 1e-3) ** -0.5, "spike", params)
    f = DiscreteField(grid, np.ones(grid.node_count), "one", params)
    result = regularity_report(params, u, f, math.inf, ORIGIN, None, 1.0)
    assert result.alpha_measured <= 0.0
    assert not result.passed
    assert math.isfinite(result.holder_seminorm)
    assert result.to_record()["pass"] is False


def _unit_load_solution(a, b, s, n=512):
    params = validate(3, a, b, s)
    grid = RadialGrid(3, 0.0, 1.0, n)
    f = DiscreteField(grid, np.ones(grid.node_count), "one", params)
    u, report = solve_dirichlet(params, grid, f, 0.0, tol=1e-12)
    assert report.converged
    return params, u, f


@pytest.mark.parametrize("a, b, s", [(0.3, 0.4, math.inf), (0.0, 0.0, 1.6), (-0.5, -0.2, math.inf)])
def test_regularity_report_meets_the_predicted_bound(a, b, s):
    params, u, f = _unit_load_solution(a, b, s)
    estimate = fundamental_alpha_h(3, a)
    result = regularity_report(params, u, f, s, ORIGIN, None, estimate.alpha_h, 0.1)
    assert result.alpha_measured >= result.alpha_predicted_sup - 0.1
    assert result.passed


def test_campanato_and_gradient_readouts_agree():
    params, u, _ = _unit_load_solution(0.3, 0.4, math.inf)
    radii = default_radii(u.grid, ORIGIN)
    campanato = fit_growth(campanato_profile(params, u, ORIGIN, radii))
    gradient = fit_growth(gradient_profile(params, u, ORIGIN, radii))
    assert campanato.alpha == pytest.approx(0.6, abs=0.1)
    assert abs(campanato.alpha - gradient.alpha) <= 0.1


def test_constructed_square_root_cusp_reads_one_half():
    assert constructed_field_alpha() == pytest.approx(0.5, abs=0.05)


def test_mean_value_rate_tracks_the_measured_exponent():
    params, u, f = _unit_load_solution(0.3, 0.4, math.inf)
    alpha = regularity_report(params, u, f, math.inf, ORIGIN, None, fundamental_alpha_h(3, 0.3).alpha_h).alpha_measured
    rates = mean_value_rates(params, [(0.15, 0.0, 0.0), (0.3, 0.0, 0.0)], 1e-12)
    assert len(rates) == 2
    assert min(rates) >= alpha - 0.1
