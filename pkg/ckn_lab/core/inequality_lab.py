"""Empirical sides of the weighted inequalities: CKN, Poincare, sup bound,
oscillation decay, weak Harnack and energy decay.

Every check returns a ``RatioSample`` with the unknown constant left out, so
suites can report the largest ratio seen as an empirical constant.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from ckn_lab.core.ckn_params import WeightParams
from ckn_lab.core.discrete_fields import DiscreteField, Grid, dirichlet_energy, lq_norm, oscillation
from ckn_lab.core.elliptic_solver import stiffness_matrix
from ckn_lab.core.regularity_analyzer import GrowthProfile, gradient_profile
from ckn_lab.core.weighted_measure import BallSpec, sphere_area
from ckn_lab.errors import (
    BallOutsideDomain,
    DegenerateOscillation,
    InsufficientPoints,
    NegativeField,
    NotSuperharmonic,
    ZeroField,
)

logger = logging.getLogger("inequality")

SUPERHARMONIC_TOL = 1e-10
_OSC_FLOOR = 1e-14


@dataclass(frozen=True)
class RatioSample:
    lhs: float
    rhs_core: float
    ratio: float
    descriptor: str = ""

    @classmethod
    def of(cls, lhs: float, rhs_core: float, descriptor: str = "") -> "RatioSample":
        if rhs_core > 0.0:
            ratio = lhs / rhs_core
        else:
            ratio = 0.0 if lhs == 0.0 else math.inf
        return cls(float(lhs), float(rhs_core), float(ratio), descriptor)


@dataclass(frozen=True)
class AlphaHEstimate:
    alpha_h: float
    fit_residual: float
    n_samples: int
    slope: float = math.nan


def ckn_ratio(params: WeightParams, field: DiscreteField) -> RatioSample:
    """(int |u|^p |x|^{-bp})^{1/p} against (int |grad u|^2 |x|^{-2a})^{1/2}."""
    if not np.any(field.values):
        raise ZeroField(f"{field.name} vanishes identically")
    lhs = lq_norm(params, field, params.p)
    rhs = math.sqrt(dirichlet_energy(params, field))
    return RatioSample.of(lhs, rhs, field.name)


def radial_ckn_ratio(params: WeightParams, u: Callable, du: Callable, r_max: float, descriptor: str = "radial") -> RatioSample:
    """CKN quotient of a radial profile supported in [0, r_max], by adaptive 1D quadrature."""
    N, p = params.N, params.p
    sigma = sphere_area(N)
    opts = dict(limit=400, epsabs=0.0, epsrel=1e-12)
    mass, _ = integrate.quad(lambda r: abs(float(u(r))) ** p * r ** (N - 1.0 - params.bp), 0.0, r_max, **opts)
    energy, _ = integrate.quad(lambda r: float(du(r)) ** 2 * r ** (N - 1.0 - 2.0 * params.a), 0.0, r_max, **opts)
    if mass == 0.0:
        raise ZeroField(f"{descriptor} vanishes identically")
    return RatioSample.of((sigma * mass) ** (1.0 / p), math.sqrt(sigma * energy), descriptor)


def poincare_ratio(params: WeightParams, field: DiscreteField, ball: BallSpec) -> RatioSample:
    """int_B |u - u_B|^2 d mu_a against r^2 int_B |grad u|^2 d mu_a."""
    w, v = field.ball_quadrature(ball, 2.0 * params.a)
    mean = float(np.sum(w * v) / np.sum(w))
    lhs = float(np.sum(w * (v - mean) ** 2))
    rhs = ball.radius**2 * field.ball_gradient_energy(ball, 2.0 * params.a)
    return RatioSample.of(lhs, rhs, f"{field.name}@{ball.center}/{ball.radius:g}")


def sup_bound_ratio(params: WeightParams, field: DiscreteField, ball: BallSpec) -> RatioSample:
    """max over B_{r/2} of |u| against the mu_a-average of u^2 over B_r, square-rooted."""
    w, v = field.ball_quadrature(ball, 2.0 * params.a)
    rhs = math.sqrt(float(np.sum(w * v**2) / np.sum(w)))
    half = field.grid.ball_mask(BallSpec(ball.center, ball.radius / 2.0))
    lhs = float(np.max(np.abs(field.values[half]))) if np.any(half) else 0.0
    return RatioSample.of(lhs, rhs, f"{field.name}@{ball.center}/{ball.radius:g}")


def estimate_alpha_h(params: WeightParams, harmonic_field: DiscreteField, center, radii: Sequence[float]) -> AlphaHEstimate:
    """Slope of log osc(u, B_rho) against log rho, clamped to (0, 1]."""
    if len(radii) < 3:
        raise InsufficientPoints(f"{len(radii)} radii, need 3")
    osc = []
    for r in radii:
        value = oscillation(harmonic_field, BallSpec(tuple(center), float(r)))
        if value < _OSC_FLOOR:
            raise DegenerateOscillation(f"osc={value:.3e} at radius {r}")
        osc.append(value)
    x, y = np.log(np.asarray(radii, dtype=float)), np.log(osc)
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    alpha = float(min(max(slope, 1e-3), 1.0))
    if alpha != slope:
        logger.warning(f"alpha_h:clamp slope={slope:.4f} alpha_h={alpha:.4f}")
    logger.info(f"alpha_h:fit slope={slope:.4f} rms={rms:.3e} samples={len(radii)}")
    return AlphaHEstimate(alpha, rms, len(radii), float(slope))


def superharmonic_defect(params: WeightParams, field: DiscreteField, mask: np.ndarray) -> float:
    """Most negative scaled (K u)_i over masked non-boundary nodes; >= 0 for weak supersolutions."""
    K = stiffness_matrix(field.grid, 2.0 * params.a)
    flux = K @ field.values
    check = mask & ~field.grid.boundary_mask()
    if not np.any(check):
        return 0.0
    scale = float(np.max(K.diagonal())) * max(float(np.max(np.abs(field.values))), 1e-300)
    return float(np.min(flux[check])) / scale


def weak_harnack_check(params: WeightParams, field: DiscreteField, ball: BallSpec, s_exp: float = 1.0) -> RatioSample:
    """(mu_a-average of u^s over B_r)^{1/s} against min of u over B_{r/2}.

    A zero minimum gives ratio inf; callers drop those samples from aggregates.
    """
    grid = field.grid
    wide = BallSpec(ball.center, 2.0 * ball.radius)
    if not grid.contains_ball(wide):
        raise BallOutsideDomain(f"B_2r around {ball.center} with r={ball.radius} leaves the grid")
    mask = grid.ball_mask(wide)
    if float(np.min(field.values[mask])) < 0.0:
        raise NegativeField(f"{field.name} takes negative values in B_2r")
    defect = superharmonic_defect(params, field, mask)
    if defect < -SUPERHARMONIC_TOL:
        raise NotSuperharmonic(f"{field.name}: scaled weak residual {defect:.3e}")
    w, v = field.ball_quadrature(ball, 2.0 * params.a)
    lhs = (float(np.sum(w * np.maximum(v, 0.0) ** s_exp)) / float(np.sum(w))) ** (1.0 / s_exp)
    half = grid.ball_mask(BallSpec(ball.center, ball.radius / 2.0))
    rhs = float(np.min(field.values[half])) if np.any(half) else 0.0
    sample = RatioSample(lhs, rhs, lhs / rhs if rhs > 0.0 else math.inf, f"{field.name}@{ball.center}/{ball.radius:g}")
    if math.isinf(sample.ratio):
        logger.warning(f"harnack:degenerate field={field.name} min_half_ball=0")
    return sample


def energy_decay_profile(params: WeightParams, harmonic_field: DiscreteField, center, radii: Sequence[float]) -> GrowthProfile:
    """Phi(rho) = int_{B_rho} |grad u|^2 d mu_a per radius."""
    profile = gradient_profile(params, harmonic_field, center, radii)
    logger.debug(f"energy_decay:done radii={len(profile.radii)} top={profile.values[0]:.6g}")
    return profile


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def build_field_suite(params: WeightParams, grid: Grid, seed: int, count: int = 50) -> list[DiscreteField]:
    """Deterministic test fields vanishing on a boundary band.

    Families cycle through polynomials, radial bumps, |x|^beta powers and
    random Fourier sums; each is multiplied by a smooth cutoff.
    """
    rng = np.random.default_rng(seed)
    dist = grid.distance_to_boundary()
    band = 0.2 * float(np.max(dist))
    cutoff = _smoothstep(dist / band)
    if grid.kind == "radial":
        r = grid.radii
        x = r[:, None]
        extent = grid.r_max
    else:
        x = grid.points
        r = np.sqrt(np.sum(x**2, axis=1))
        extent = float(np.max(np.abs(x)))
    fields = []
    for k in range(count):
        family = k % 4
        if family == 0:
            coeff = rng.normal(size=x.shape[1])
            values = 1.0 + x @ coeff / extent + rng.normal() * (r / extent) ** 2
            label = "poly"
        elif family == 1:
            R = rng.uniform(0.3, 0.9) * extent
            power = rng.integers(2, 5)
            values = np.clip(1.0 - (r / R) ** 2, 0.0, None) ** power
            label = "bump"
        elif family == 2:
            beta = rng.uniform(0.25, 2.0)
            values = (r / extent) ** beta
            label = f"power{beta:.3f}"
        else:
            values = np.zeros(len(r))
            for _ in range(3):
                wave = rng.normal(size=x.shape[1]) * (2.0 * math.pi / extent)
                values += rng.normal() * np.cos(x @ wave + rng.uniform(0.0, 2.0 * math.pi))
            label = "fourier"
        values = values * cutoff
        if not np.any(values):
            values = cutoff.copy()
        fields.append(DiscreteField(grid, values, f"{label}#{k}", params))
    return fields


def _aggregate(samples: list[RatioSample]) -> float:
    finite = [s.ratio for s in samples if math.isfinite(s.ratio)]
    return max(finite) if finite else math.nan


def ckn_suite(params: WeightParams, grid: Grid, seed: int, count: int = 50) -> tuple[list[RatioSample], float]:
    """CKN quotient over the field suite and the largest finite ratio."""
    samples = [ckn_ratio(params, field) for field in build_field_suite(params, grid, seed, count)]
    worst = _aggregate(samples)
    logger.info(f"ckn:suite fields={len(samples)} max_ratio={worst:.6g}")
    return samples, worst


def suite_balls(grid: Grid, seed: int, count: int, max_fraction: float = 0.5) -> list[BallSpec]:
    """Seeded balls inside the grid domain, each holding a few cells."""
    rng = np.random.default_rng(seed)
    h = grid.cell_width
    if grid.kind == "radial":
        room = max_fraction * (grid.r_max - grid.r_min)
    else:
        room = max_fraction * 0.5 * float(np.min(np.array(grid.upper) - np.array(grid.lower)))
    if room <= 4.0 * h:
        raise InsufficientPoints(f"grid too coarse for suite balls: h={h:.3g}, room={room:.3g}")
    balls = []
    while len(balls) < count:
        if grid.kind == "radial":
            radius = rng.uniform(4.0 * h, max_fraction * (grid.r_max - grid.r_min))
            if grid.r_min == 0.0:
                center = (0.0,) * grid.N
            else:
                d = grid.r_min + radius + rng.uniform(0.0, grid.r_max - grid.r_min - 2.0 * radius)
                center = (d,) + (0.0,) * (grid.N - 1)
        else:
            span = np.array(grid.upper) - np.array(grid.lower)
            radius = rng.uniform(4.0 * h, max_fraction * 0.5 * float(np.min(span)))
            center = tuple(rng.uniform(np.array(grid.lower) + radius, np.array(grid.upper) - radius))
        ball = BallSpec(center, radius)
        if grid.contains_ball(ball):
            balls.append(ball)
    return balls


def poincare_suite(params: WeightParams, grid: Grid, seed: int, count: int = 50, balls_per_field: int = 3) -> tuple[list[RatioSample], float]:
    """Weighted Poincare quotient over the field suite on seeded balls."""
    samples = []
    balls = suite_balls(grid, seed + 1, balls_per_field)
    for field in build_field_suite(params, grid, seed, count):
        for ball in balls:
            samples.append(poincare_ratio(params, field, ball))
    worst = _aggregate(samples)
    logger.info(f"poincare:suite samples={len(samples)} max_ratio={worst:.6g}")
    return samples, worst


def sup_bound_suite(params: WeightParams, fields: Sequence[DiscreteField], balls: Sequence[BallSpec]) -> tuple[list[RatioSample], float]:
    samples = [sup_bound_ratio(params, field, ball) for field in fields for ball in balls]
    return samples, _aggregate(samples)


def harnack_aggregate(samples: Sequence[RatioSample]) -> Optional[float]:
    """Largest finite weak Harnack ratio, or None when every sample degenerated."""
    finite = [s.ratio for s in samples if math.isfinite(s.ratio)]
    return max(finite) if finite else None
