"""The weighted measure mu_a = |x|^{-2a} dx on balls.

Balls centred at the origin use the closed form. Other balls are integrated
shell by shell: the sphere |x| = rho meets B_r(x0) in a spherical cap whose
area fraction is a regularised incomplete beta function, so only a 1D
integral in rho remains.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, TypedDict

import numpy as np
from scipy import special

from ckn_lab.core.ckn_params import WeightParams
from ckn_lab.errors import NonpositiveRadius, QuadratureNonconvergence

if TYPE_CHECKING:
    from ckn_lab.core.discrete_fields import DiscreteField

logger = logging.getLogger("measure")

DEFAULT_TOL = 1e-10
_START_PANELS = 16
_MAX_PANELS = 2**20


@dataclass(frozen=True)
class BallSpec:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise NonpositiveRadius(f"radius={self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def center_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.center))

    @classmethod
    def at_distance(cls, N: int, distance: float, radius: float) -> "BallSpec":
        """Ball whose centre sits on the first axis at the given distance from 0."""
        return cls(center=(distance,) + (0.0,) * (N - 1), radius=radius)


class MeasureMethod(str, Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class MeasureResult:
    value: float
    method: MeasureMethod
    est_error: float


class LemmaA1Sample(TypedDict):
    lhs: float
    rhs_without_constant: float
    ratio: float
    envelope: float


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N, 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2.0) / float(special.gamma(N / 2.0))


def unit_ball_volume(N: int) -> float:
    return sphere_area(N) / N


def radial_moment(lo, hi, c: float):
    """Integral of rho^c over [lo, hi] for c > -1."""
    return (np.power(hi, c + 1.0) - np.power(lo, c + 1.0)) / (c + 1.0)


def centered_ball_integral(N: int, kappa: float, radius: float) -> float:
    """Integral of |x|^{-kappa} over B_radius(0); needs kappa < N."""
    return sphere_area(N) * radius ** (N - kappa) / (N - kappa)


def cap_fraction(N: int, t, d: float, r: float):
    """Fraction of the sphere |x| = d + t lying inside B_r(x0), |x0| = d > 0.

    Written in t = rho - d so that 1 - cos(theta) stays accurate for r << d.
    """
    t = np.asarray(t, dtype=float)
    rho = d + t
    one_minus_cos = np.clip((r - t) * (r + t) / (2.0 * rho * d), 0.0, 2.0)
    cos_theta = 1.0 - one_minus_cos
    sin2 = np.clip(one_minus_cos * (1.0 + cos_theta), 0.0, 1.0)
    half = 0.5 * special.betainc((N - 1) / 2.0, 0.5, sin2)
    return np.where(cos_theta >= 0.0, half, 1.0 - half)


def _mapped_midpoint(integrand, lo: float, hi: float, n: int) -> float:
    # midpoint rule in theta for rho = lo + (hi - lo)(1 - cos theta)/2, which
    # flattens the square-root behaviour of cap fractions at both ends
    theta = (np.arange(n) + 0.5) * (math.pi / n)
    x = 0.5 * (hi - lo) * (1.0 - np.cos(theta))
    jac = 0.5 * (hi - lo) * np.sin(theta)
    return float(np.sum(integrand(x) * jac) * (math.pi / n))


def _richardson(integrand, lo: float, hi: float, tol: float) -> tuple[float, float]:
    n = _START_PANELS
    coarse = _mapped_midpoint(integrand, lo, hi, n)
    while n < _MAX_PANELS:
        n *= 2
        fine = _mapped_midpoint(integrand, lo, hi, n)
        err = abs(fine - coarse) / 3.0
        value = fine + (fine - coarse) / 3.0
        if err <= tol * abs(value) or value == 0.0:
            return value, err
        coarse = fine
    raise QuadratureNonconvergence(f"shell quadrature on [{lo}, {hi}] stalled at {n} panels")


def ball_integral(N: int, kappa: float, ball: BallSpec, tol: float = DEFAULT_TOL, force_quadrature: bool = False) -> MeasureResult:
    """Integral of |x|^{-kappa} over a ball; kappa < N keeps it finite."""
    sigma = sphere_area(N)
    c = N - 1.0 - kappa
    d, r = ball.center_norm, ball.radius
    if d == 0.0 and not force_quadrature:
        return MeasureResult(centered_ball_integral(N, kappa, r), MeasureMethod.CLOSED_FORM, 0.0)
    if d == 0.0:
        value, err = _richardson(lambda x: sigma * np.power(x, c), 0.0, r, tol)
        return MeasureResult(value, MeasureMethod.QUADRATURE, err)
    # shells fully inside the ball (only when it contains the origin) are exact
    inner = 0.0
    if d < r:
        inner = sigma * float(radial_moment(0.0, r - d, c))
    t_lo = abs(d - r) - d

    def shell(x):
        t = t_lo + x
        return sigma * np.power(d + t, c) * cap_fraction(N, t, d, r)

    value, err = _richardson(shell, 0.0, r - t_lo, tol)
    return MeasureResult(inner + value, MeasureMethod.QUADRATURE, err)


def ball_measure(params: WeightParams, ball: BallSpec, tol: float = DEFAULT_TOL, force_quadrature: bool = False) -> MeasureResult:
    """mu_a(ball)."""
    result = ball_integral(params.N, 2.0 * params.a, ball, tol, force_quadrature)
    logger.debug(f"measure:ball d={ball.center_norm:.6g} r={ball.radius:.6g} value={result.value:.12g} method={result.method.value}")
    return result


def doubling_ratio(params: WeightParams, center, r: float, tau: float, tol: float = DEFAULT_TOL) -> float:
    """mu_a(B(x, r)) / mu_a(B(x, tau r)), one sample of the doubling constant."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau={tau} must lie in (0, 1)")
    big = ball_measure(params, BallSpec(tuple(center), r), tol).value
    small = ball_measure(params, BallSpec(tuple(center), tau * r), tol).value
    return big / small


def weighted_mean(params: WeightParams, field: "DiscreteField", ball: BallSpec) -> float:
    """(1/mu_a(B)) * integral of u over B with respect to mu_a, via the field's quadrature."""
    weights, values = field.ball_quadrature(ball, 2.0 * params.a)
    return float(np.sum(weights * values) / np.sum(weights))


def lemma_a1_envelope(params: WeightParams, ball: BallSpec, eps: float) -> float:
    """Explicit upper bound for the measure comparison ratio of one ball.

    Near balls (rho >= |x0|/2) bound the |x|^{-bp} mass by B_{|x0|+rho}(0) and
    the mu_a mass from below by rearrangement; far balls use the extreme
    values of both weights on the shell range [|x0| - rho, |x0| + rho].
    """
    N, a, bp = params.N, params.a, params.bp
    rho, d = ball.radius, ball.center_norm
    power = 2.0 / params.p + eps
    omega = unit_ball_volume(N)
    if rho >= d / 2.0:
        upper = centered_ball_integral(N, bp, d + rho)
        if a >= 0.0:
            lower = omega * rho**N * (d + rho) ** (-2.0 * a)
        else:
            lower = centered_ball_integral(N, 2.0 * a, rho)
    else:
        ends = np.array([d - rho, d + rho])
        upper = omega * rho**N * float(np.max(ends ** (-bp)))
        lower = omega * rho**N * float(np.min(ends ** (-2.0 * a)))
    scale = rho ** (-2.0 + eps * N) * max(rho, d) ** (-eps * bp)
    return upper**power / (scale * lower)


def lemma_a1_check(params: WeightParams, ball: BallSpec, eps: float, tol: float = DEFAULT_TOL) -> LemmaA1Sample:
    """Both sides of the measure comparison for one ball, constant left out."""
    if not eps > 0.0:
        raise ValueError(f"eps={eps} must be positive")
    rho, d = ball.radius, ball.center_norm
    lhs = ball_integral(params.N, params.bp, ball, tol).value ** (2.0 / params.p + eps)
    mu = ball_measure(params, ball, tol).value
    rhs = rho ** (-2.0 + eps * params.N) * max(rho, d) ** (-eps * params.bp) * mu
    return LemmaA1Sample(
        lhs=lhs,
        rhs_without_constant=rhs,
        ratio=lhs / rhs,
        envelope=lemma_a1_envelope(params, ball, eps),
    )
