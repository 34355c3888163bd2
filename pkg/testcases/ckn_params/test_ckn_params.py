import math

import numpy as np
import pytest

from ckn_lab.core.ckn_params import (
    LimitingBranch,
    conjugate_exponents,
    critical_exponent,
    epsilon_choice,
    holder_bound,
    identity_defect,
    k0_threshold,
    moser_ladder,
    target_integrability,
    validate,
)
from ckn_lab.errors import (
    AOutOfRange,
    BOutOfRange,
    DimensionTooSmall,
    InvalidAlphaH,
    STooSmall,
)


def test_critical_exponent_values():
    assert critical_exponent(3, 0.0, 0.0) == pytest.approx(6.0, rel=1e-15)
    assert critical_exponent(4, 0.5, 0.75) == pytest.approx(3.2, rel=1e-15)


@pytest.mark.parametrize(
    "args, error",
    [
        ((2, 0.0, 0.0), DimensionTooSmall),
        ((3, 0.5, 0.5), AOutOfRange),
        ((3, 0.0, -0.1), BOutOfRange),
        ((3, 0.0, 1.2), BOutOfRange),
        ((3, 0.0, 1.0), BOutOfRange),
        ((3, 0.0, 0.0, 1.5), STooSmall),
    ],
)
def test_validate_rejects(args, error):
    with pytest.raises(error):
        validate(*args)


def test_validate_b_equal_a_plus_one_outside_holder_mode():
    params = validate(3, 0.0, 1.0, holder_mode=False)
    assert params.p == pytest.approx(2.0)
    assert not params.strict


def test_error_codes_are_stable():
    with pytest.raises(STooSmall) as info:
        validate(3, 0.0, 0.0, 1.5)
    assert info.value.code == "s_too_small"


def test_derived_properties():
    params = validate(3, 0.0, 0.0)
    assert params.bp == 0.0
    assert params.s_threshold == pytest.approx(1.5)
    assert params.harmonic_exponent == pytest.approx(-1.0)
    assert params.dilation_exponent == pytest.approx(0.5)
    assert params.with_s(1.6).s == 1.6
    with pytest.raises(STooSmall):
        params.with_s(1.4)


def test_epsilon_choice():
    assert epsilon_choice(validate(3, 0.0, 0.0)) == pytest.approx(4.0 / 3.0)
    assert epsilon_choice(validate(3, 0.0, 0.0, 4.0)) == pytest.approx(2.0 * 2.5 / 6.0)


@pytest.mark.parametrize(
    "a, b, s, alpha_h, expected, branch",
    [
        (0.0, 0.0, math.inf, 1.0, 1.0, LimitingBranch.UNIT),
        (0.0, 0.0, math.inf, 0.7, 0.7, LimitingBranch.HARMONIC_EXPONENT),
        (0.3, 0.4, math.inf, 1.0, 0.6, LimitingBranch.INTEGRABILITY_B_NONNEG),
        (0.0, 0.0, 1.6, 1.0, 0.125, LimitingBranch.INTEGRABILITY_B_NONNEG),
        (-0.5, -0.2, math.inf, 0.9, 0.9, LimitingBranch.HARMONIC_EXPONENT),
        (-0.5, -0.2, math.inf, 1.0, 1.0, LimitingBranch.UNIT),
    ],
)
def test_holder_bound_matrix(a, b, s, alpha_h, expected, branch):
    bound = holder_bound(validate(3, a, b, s), alpha_h)
    assert bound.alpha_sup == pytest.approx(expected, rel=1e-12)
    assert bound.limiting_branch is branch


def test_holder_bound_negative_b_branch_value():
    # p = 3.75, N/p (p - 2) = 1.4 sits above the unit cap
    params = validate(3, -0.5, -0.2)
    assert params.p == pytest.approx(3.75)
    low = validate(3, -0.5, -0.2, 2.2)
    bound = holder_bound(low, 1.0)
    margin = 3.75 - 2.0 - 3.75 / 2.2
    assert bound.alpha_sup == pytest.approx(3.0 / 3.75 * margin)
    assert bound.limiting_branch is LimitingBranch.INTEGRABILITY_B_NEG


@pytest.mark.parametrize("alpha_h", [0.0, -0.1, 1.5])
def test_holder_bound_rejects_alpha_h(alpha_h):
    with pytest.raises(InvalidAlphaH):
        holder_bound(validate(3, 0.0, 0.0), alpha_h)


def test_moser_ladder_exact_and_increasing():
    params = validate(3, 0.0, 0.0)
    assert moser_ladder(params, 2) == [6.0, 18.0, 54.0]
    ladder = moser_ladder(validate(4, 0.5, 0.75), 10)
    assert all(b > a for a, b in zip(ladder, ladder[1:]))
    assert ladder == [3.2 ** (k + 1) / 2.0**k for k in range(11)]


def test_k0_threshold_matches_brute_force():
    assert k0_threshold(validate(3, 0.0, 0.0)) == 1
    assert k0_threshold(validate(4, 0.0, 0.0)) == 2
    params = validate(4, 0.5, 0.75)
    k0 = k0_threshold(params)
    p = params.p
    target = 2.0 * (p - 1.0) / (p - 2.0)
    assert (p / 2.0) ** k0 >= target
    assert (p / 2.0) ** (k0 - 1) < target
    assert moser_ladder(params, k0)[-1] >= target_integrability(params) * (1.0 - 1e-12)


def test_target_and_conjugate_exponents():
    params = validate(3, 0.0, 0.0)
    assert target_integrability(params) == pytest.approx(15.0)
    first, second = conjugate_exponents(params)
    assert math.isinf(first)
    assert second == pytest.approx(1.0)
    first, second = conjugate_exponents(validate(3, 0.0, 0.0, 4.0))
    assert first == pytest.approx(10.0 / 3.0)
    assert second == pytest.approx(5.0 / 3.5)


def test_identity_defect_random_tuples():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        N = int(rng.integers(3, 9))
        a = rng.uniform(-2.0, (N - 2) / 2.0 - 1e-9)
        b = rng.uniform(a, a + 1.0)
        params = validate(N, a, b, holder_mode=False)
        assert abs(identity_defect(params)) <= 1e-12 * max(1.0, N - 2.0 - 2.0 * a)
