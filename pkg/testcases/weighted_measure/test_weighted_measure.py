import math

import numpy as np
import pytest

from ckn_lab.core.ckn_params import epsilon_choice, validate
from ckn_lab.core.discrete_fields import DiscreteField, RadialGrid
from ckn_lab.core.weighted_measure import (
    BallSpec,
    MeasureMethod,
    ball_integral,
    ball_measure,
    cap_fraction,
    centered_ball_integral,
    doubling_ratio,
    lemma_a1_check,
    sphere_area,
    unit_ball_volume,
    weighted_mean,
)
from ckn_lab.errors import NonpositiveRadius


def test_sphere_area_and_volume():
    assert sphere_area(2) == pytest.approx(2.0 * math.pi)
    assert sphere_area(3) == pytest.approx(4.0 * math.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)
    assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2.0)


def test_ball_spec_validation():
    with pytest.raises(NonpositiveRadius):
        BallSpec((0.0, 0.0, 0.0), 0.0)
    ball = BallSpec.at_distance(3, 2.0, 0.5)
    assert ball.center == (2.0, 0.0, 0.0)
    assert ball.center_norm == 2.0


@pytest.mark.parametrize("N", [3, 4, 5, 6, 7])
@pytest.mark.parametrize("frac", [-0.4, 0.0, 0.5, 0.9])
def test_closed_form_matches_quadrature(N, frac):
    a = frac * (N - 2) / 2.0
    params = validate(N, a, a, holder_mode=False)
    for r in (0.1, 1.0, 5.0):
        ball = BallSpec((0.0,) * N, r)
        closed = ball_measure(params, ball)
        quad = ball_measure(params, ball, force_quadrature=True)
        assert closed.method is MeasureMethod.CLOSED_FORM
        assert quad.method is MeasureMethod.QUADRATURE
        assert quad.value == pytest.approx(closed.value, rel=1e-8)


def test_centered_doubling_ratio_is_exact():
    for N, a in [(3, 0.0), (3, 0.25), (5, -1.0), (6, 1.5)]:
        params = validate(N, a, a, holder_mode=False)
        ratio = doubling_ratio(params, (0.0,) * N, 1.0, 0.5)
        assert ratio == pytest.approx(2.0 ** (N - 2.0 * a), rel=1e-10)


@pytest.mark.parametrize("a", [0.25, -0.5])
def test_far_ball_doubling_sees_the_volume(a):
    params = validate(3, a, a, holder_mode=False)
    ratio = doubling_ratio(params, (50.0, 0.0, 0.0), 1.0, 0.5)
    assert ratio == pytest.approx(8.0, rel=0.05)


def test_doubling_ratio_rejects_tau():
    params = validate(3, 0.0, 0.0)
    with pytest.raises(ValueError):
        doubling_ratio(params, (0.0, 0.0, 0.0), 1.0, 1.0)


@pytest.mark.parametrize("d, r", [(2.0, 0.5), (0.3, 1.0), (1.0, 1.0), (5.0, 1e-3)])
def test_off_center_volume(d, r):
    value = ball_integral(3, 0.0, BallSpec.at_distance(3, d, r)).value
    assert value == pytest.approx(4.0 * math.pi * r**3 / 3.0, rel=1e-8)


def test_off_center_mean_value_of_harmonic_weight():
    # |x|^{-1} is harmonic away from 0 in R^3: its ball average is its value at the centre
    ball = BallSpec.at_distance(3, 2.0, 0.5)
    value = ball_integral(3, 1.0, ball).value
    assert value == pytest.approx(4.0 * math.pi * 0.125 / 3.0 / 2.0, rel=1e-8)


def test_cap_fraction_limits():
    t = np.array([-0.5, 0.5])
    assert np.allclose(cap_fraction(3, t, 2.0, 0.5), 0.0, atol=1e-12)
    # the sphere through the centre of a ball of radius equal to the distance is cut at 60 degrees
    half = cap_fraction(3, np.array([0.0]), 1.0, 1.0)[0]
    assert half == pytest.approx((1.0 - math.cos(math.pi / 3.0)) / 2.0, rel=1e-12)


def test_centered_ball_integral_formula():
    assert centered_ball_integral(3, 0.0, 2.0) == pytest.approx(4.0 * math.pi * 8.0 / 3.0)
    assert centered_ball_integral(3, 1.0, 1.0) == pytest.approx(2.0 * math.pi)


def test_lemma_a1_ratio_below_envelope():
    params = validate(3, 0.2, 0.5, 4.0)
    eps = epsilon_choice(params)
    rng = np.random.default_rng(4)
    for k in range(60):
        rho = 10.0 ** rng.uniform(-3.0, 1.0)
        d = 0.0 if k % 10 == 0 else 10.0 ** rng.uniform(-3.0, 1.0)
        sample = lemma_a1_check(params, BallSpec.at_distance(3, d, rho), eps)
        assert sample["ratio"] > 0.0
        assert sample["ratio"] <= sample["envelope"] * (1.0 + 1e-6)


def test_weighted_mean_of_constant_and_linear_profile():
    params = validate(3, 0.25, 0.25, holder_mode=False)
    grid = RadialGrid(3, 0.0, 1.0, 64)
    one = DiscreteField(grid, np.full(grid.node_count, 2.5), "c", params)
    assert weighted_mean(params, one, BallSpec((0.0, 0.0, 0.0), 0.5)) == pytest.approx(2.5, rel=1e-12)
    ramp = DiscreteField.sample(grid, lambda r: r, "r", params)
    # mean of |x| over B_R(0) under |x|^{-1/2} dx: (N - 2a)/(N - 2a + 1) R
    mean = weighted_mean(params, ramp, BallSpec((0.0, 0.0, 0.0), 0.5))
    assert mean == pytest.approx(2.5 / 3.5 * 0.5, rel=1e-10)
