"""Campanato growth profiles, exponent fits and discrete Hoelder quotients."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ckn_lab.core.ckn_params import LimitingBranch, WeightParams, holder_bound
from ckn_lab.core.discrete_fields import DiscreteField, Grid, lq_norm
from ckn_lab.core.weighted_measure import BallSpec
from ckn_lab.errors import EmptySubdomain, InsufficientPoints

logger = logging.getLogger("regularity")

DEFAULT_SLACK = 0.1
_ALL_PAIRS_LIMIT = 2000
_SAMPLED_PAIRS = 2_000_000
_PAIR_CHUNK = 200_000
_MIN_QUOTIENT_ALPHA = 1e-3


class ProfileKind(str, Enum):
    CAMPANATO = "campanato"
    GRADIENT_ENERGY = "gradient_energy"


class Normalization(str, Enum):
    RAW = "raw"
    MEASURE_NORMALIZED = "measure_normalized"


@dataclass(frozen=True)
class GrowthProfile:
    """One growth quantity per ball B_r(center), radii strictly decreasing.

    ``measures`` holds the discrete mu_a(B_r) of the same quadrature, used by
    the measure-normalised readout.
    """

    center: tuple[float, ...]
    radii: np.ndarray
    values: np.ndarray
    kind: ProfileKind
    measures: np.ndarray

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if radii.shape != values.shape or radii.shape != np.shape(self.measures):
            raise ValueError("radii, values and measures must have one entry per ball")
        if np.any(np.diff(radii) >= 0.0):
            raise ValueError(f"radii {radii} must be strictly decreasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("profile values must be finite and nonnegative")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "measures", np.asarray(self.measures, dtype=float))


@dataclass(frozen=True)
class FitResult:
    exponent: float
    log_constant: float
    rms_residual: float
    alpha: float = math.nan
    clamped: bool = False
    dropped: int = 0


@dataclass(frozen=True)
class HolderQuotient:
    seminorm: float
    sup_norm: float
    pair: tuple[int, int]


@dataclass(frozen=True)
class RegularityReport:
    alpha_measured: float
    alpha_predicted_sup: float
    limiting_branch: LimitingBranch
    holder_seminorm: float
    sup_norm: float
    passed: bool
    fit: FitResult
    data_norm: float = math.nan

    def to_record(self) -> dict:
        """Report fields in their fixed output order."""
        return {
            "alpha_measured": self.alpha_measured,
            "alpha_predicted_sup": self.alpha_predicted_sup,
            "limiting_branch": self.limiting_branch.value,
            "holder_seminorm": self.holder_seminorm,
            "sup_norm": self.sup_norm,
            "pass": self.passed,
        }


def _balls(center, radii) -> list[BallSpec]:
    return [BallSpec(tuple(center), float(r)) for r in radii]


def campanato_profile(params: WeightParams, field: DiscreteField, center, radii: Sequence[float]) -> GrowthProfile:
    """values[i] = integral over B_{radii[i]} of |u - u_{x,r}|^2 d mu_a."""
    values, measures = [], []
    for ball in _balls(center, radii):
        w, v = field.ball_quadrature(ball, 2.0 * params.a)
        mu = float(np.sum(w))
        mean = float(np.sum(w * v)) / mu
        values.append(float(np.sum(w * (v - mean) ** 2)))
        measures.append(mu)
    return GrowthProfile(tuple(center), np.asarray(radii, dtype=float), np.array(values), ProfileKind.CAMPANATO, np.array(measures))


def gradient_profile(params: WeightParams, field: DiscreteField, center, radii: Sequence[float]) -> GrowthProfile:
    """values[i] = integral over B_{radii[i]} of |grad u|^2 d mu_a."""
    values, measures = [], []
    for ball in _balls(center, radii):
        w, _ = field.ball_quadrature(ball, 2.0 * params.a)
        values.append(field.ball_gradient_energy(ball, 2.0 * params.a))
        measures.append(float(np.sum(w)))
    return GrowthProfile(tuple(center), np.asarray(radii, dtype=float), np.array(values), ProfileKind.GRADIENT_ENERGY, np.array(measures))


def fit_growth(profile: GrowthProfile, normalization: Normalization = Normalization.MEASURE_NORMALIZED) -> FitResult:
    """Least-squares slope of log value against log r and the Hoelder readout it implies.

    Campanato profiles read alpha = slope/2, gradient profiles alpha = (slope + 2)/2.
    Readouts above 1 are clamped to 1 with a warning.
    """
    normalization = Normalization(normalization)
    keep = profile.values > 0.0
    dropped = int(np.sum(~keep))
    if dropped:
        logger.warning(f"fit:drop zero_entries={dropped} kind={profile.kind.value}")
    if int(np.sum(keep)) < 3:
        raise InsufficientPoints(f"{int(np.sum(keep))} positive profile entries, need 3")
    x = np.log(profile.radii[keep])
    y = profile.values[keep]
    if normalization is Normalization.MEASURE_NORMALIZED:
        y = y / profile.measures[keep]
    y = np.log(y)
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    alpha = slope / 2.0 if profile.kind is ProfileKind.CAMPANATO else (slope + 2.0) / 2.0
    clamped = alpha > 1.0
    if clamped:
        logger.warning(f"fit:clamp alpha={alpha:.4f} kind={profile.kind.value} (Lipschitz or better at these scales)")
    return FitResult(float(slope), float(intercept), rms, float(min(alpha, 1.0)), bool(clamped), dropped)


def _subdomain(field: DiscreteField, subdomain_margin: float) -> np.ndarray:
    if not subdomain_margin > 0.0:
        raise ValueError(f"margin={subdomain_margin} must be positive")
    inside = np.flatnonzero(field.grid.distance_to_boundary() >= subdomain_margin)
    if inside.size == 0:
        raise EmptySubdomain(f"no nodes at distance >= {subdomain_margin} from the boundary")
    return inside


def holder_quotient(field: DiscreteField, subdomain_margin: float, alpha: float, seed: int = 0) -> HolderQuotient:
    """max |u(x) - u(y)| / |x - y|^alpha over node pairs of the margin subdomain, and sup |u| there."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha={alpha} must lie in (0, 1]")
    idx = _subdomain(field, subdomain_margin)
    pts = field.grid.coordinates[idx]
    u = field.values[idx]
    best, pair = 0.0, (int(idx[0]), int(idx[0]))

    def scan(i: np.ndarray, j: np.ndarray):
        nonlocal best, pair
        dist = np.sqrt(np.sum((pts[i] - pts[j]) ** 2, axis=-1))
        ok = dist > 0.0
        if not np.any(ok):
            return
        q = np.zeros_like(dist)
        q[ok] = np.abs(u[i] - u[j])[ok] / dist[ok] ** alpha
        k = int(np.argmax(q))
        if q.flat[k] > best:
            ib, jb = np.broadcast_arrays(i, j)
            best = float(q.flat[k])
            pair = (int(idx[ib.flat[k]]), int(idx[jb.flat[k]]))

    m = idx.size
    if m <= _ALL_PAIRS_LIMIT:
        cols = np.arange(m)
        for start in range(0, m, 256):
            rows = np.arange(start, min(start + 256, m))
            scan(rows[:, None], cols[None, :])
    else:
        rng = np.random.default_rng(seed)
        for start in range(0, _SAMPLED_PAIRS, _PAIR_CHUNK):
            i = rng.integers(0, m, _PAIR_CHUNK)
            j = rng.integers(0, m, _PAIR_CHUNK)
            scan(i, j)
    sup = float(np.max(np.abs(u)))
    logger.debug(f"holder:done alpha={alpha:.4f} nodes={m} seminorm={best:.6g} sup={sup:.6g}")
    return HolderQuotient(best, sup, pair)


def default_radii(grid: Grid, center, ratio: float = 0.5, min_cells: float = 8.0) -> list[float]:
    """Geometric radii from dist(center, boundary)/2 down to ``min_cells`` cell widths."""
    c = np.asarray(center, dtype=float)
    if grid.kind == "radial":
        d = float(np.linalg.norm(c))
        dist = grid.r_max - d
        if grid.r_min > 0.0:
            dist = min(dist, d - grid.r_min)
    else:
        dist = float(np.min(np.minimum(c - np.array(grid.lower), np.array(grid.upper) - c)))
    radii = []
    r = dist / 2.0
    floor = min_cells * grid.cell_width
    while r >= floor:
        radii.append(r)
        r *= ratio
    if len(radii) < 3:
        raise InsufficientPoints(f"only {len(radii)} radii between {dist / 2.0:.3g} and {floor:.3g}")
    return radii


def _value_at(field: DiscreteField, center) -> float:
    c = np.asarray(center, dtype=float)
    if field.grid.kind == "radial":
        return float(np.interp(np.linalg.norm(c), field.grid.radii, field.values))
    nearest = int(np.argmin(np.sum((field.grid.points - c) ** 2, axis=1)))
    return float(field.values[nearest])


def mean_value_convergence(params: WeightParams, field: DiscreteField, centers, radii: Sequence[float]) -> list[float]:
    """Fitted rate of |u_{x,r} - u(x)| -> 0 per centre; inf when the means are exact."""
    rates = []
    for center in centers:
        u0 = _value_at(field, center)
        gaps = []
        for ball in _balls(center, radii):
            w, v = field.ball_quadrature(ball, 2.0 * params.a)
            gaps.append(abs(float(np.sum(w * v)) / float(np.sum(w)) - u0))
        gaps = np.array(gaps)
        scale = max(1.0, abs(u0))
        keep = gaps > 1e-13 * scale
        if int(np.sum(keep)) < 3:
            rates.append(math.inf)
            continue
        slope, _ = np.polyfit(np.log(np.asarray(radii)[keep]), np.log(gaps[keep]), 1)
        rates.append(float(slope))
    return rates


def regularity_report(
    params: WeightParams,
    u: DiscreteField,
    f: DiscreteField,
    s_used: float,
    center,
    radii: Optional[Sequence[float]],
    alpha_h_est: float,
    slack: float = DEFAULT_SLACK,
    margin: Optional[float] = None,
    seed: int = 0,
) -> RegularityReport:
    """Measured growth exponent of u against the predicted Hoelder bound for data in L^s."""
    scoped = params.with_s(s_used)
    bound = holder_bound(scoped, alpha_h_est)
    radii = default_radii(u.grid, center) if radii is None else radii
    fit = fit_growth(gradient_profile(params, u, center, radii))
    degenerate = not fit.alpha > 0.0
    if degenerate:
        logger.warning(f"report:degenerate alpha={fit.alpha:.4f} slope={fit.exponent:.4f} (no positive growth exponent)")
    margin = 0.25 * float(np.max(u.grid.distance_to_boundary())) if margin is None else margin
    quotient_alpha = _MIN_QUOTIENT_ALPHA if degenerate else min(1.0, max(0.95 * min(fit.alpha, bound.alpha_sup), _MIN_QUOTIENT_ALPHA))
    quotient = holder_quotient(u, margin, quotient_alpha, seed)
    data_norm = float(np.max(np.abs(f.values))) if math.isinf(s_used) else lq_norm(params, f, s_used)
    passed = not degenerate and fit.alpha >= bound.alpha_sup - slack
    logger.info(
        f"report:done alpha={fit.alpha:.4f} predicted={bound.alpha_sup:.4f} "
        f"branch={bound.limiting_branch.value} pass={passed}"
    )
    return RegularityReport(
        alpha_measured=fit.alpha,
        alpha_predicted_sup=bound.alpha_sup,
        limiting_branch=bound.limiting_branch,
        holder_seminorm=quotient.seminorm,
        sup_norm=quotient.sup_norm,
        passed=bool(passed),
        fit=fit,
        data_norm=data_norm,
    )
