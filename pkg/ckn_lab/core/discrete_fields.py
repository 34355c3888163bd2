"""Grids, sampled fields and the weighted integrals taken over them.

Two grids are supported. ``RadialGrid`` carries a radial profile in any
dimension N; every integral is an exact radial moment times the unit-sphere
area. ``BoxGrid`` is a tensor grid in R^3 whose cell weights are computed by
Gauss-Legendre quadrature, subdividing near the origin where |x|^{-kappa}
is singular. Both use vertex-centred dual cells, so the origin is never a
quadrature point.
"""

import csv
import functools
import logging
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy import interpolate

from ckn_lab.core.ckn_params import WeightParams, validate
from ckn_lab.core.weighted_measure import BallSpec, cap_fraction, radial_moment, sphere_area
from ckn_lab.errors import BallOutsideDomain, EmptyBall, OriginCellUnresolved

logger = logging.getLogger("fields")

_INSIDE = 1e-12
_GAUSS_ORDER = 8
_BOX_MAX_DEPTH = 20
_BOX_RTOL = 1e-5
_CHUNK = 8192
_CACHE_SIZE = 64
_MASS_GAUSS_ORDER = 10
_GEOMETRY_CACHE_SIZE = 8
_BALL_SUBCELLS = 4
_SAMPLE_CHUNK = 262_144


def _dual_intervals(nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    lo = np.concatenate(([nodes[0]], mid))
    hi = np.concatenate((mid, [nodes[-1]]))
    return lo, hi


@dataclass(frozen=True)
class RadialGrid:
    """Nodes r_0 < ... < r_n on [r_min, r_max] carrying radial profiles in R^N."""

    N: int
    r_min: float
    r_max: float
    n_cells: int
    spacing: str = "uniform"
    explicit_nodes: Optional[tuple[float, ...]] = None

    kind = "radial"

    def __post_init__(self):
        if not 0.0 <= self.r_min < self.r_max:
            raise ValueError(f"need 0 <= r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if self.n_cells < 2:
            raise ValueError(f"n_cells={self.n_cells} must be at least 2")
        if self.spacing not in ("uniform", "geometric", "explicit"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        if self.spacing == "geometric" and self.r_min <= 0.0:
            raise ValueError("geometric spacing needs r_min > 0")

    @classmethod
    def from_nodes(cls, N: int, nodes) -> "RadialGrid":
        nodes = tuple(float(r) for r in nodes)
        return cls(N, nodes[0], nodes[-1], len(nodes) - 1, "explicit", nodes)

    @functools.cached_property
    def radii(self) -> np.ndarray:
        if self.explicit_nodes is not None:
            r = np.array(self.explicit_nodes)
        elif self.spacing == "geometric":
            r = self.r_min * (self.r_max / self.r_min) ** (np.arange(self.n_cells + 1) / self.n_cells)
        else:
            r = np.linspace(self.r_min, self.r_max, self.n_cells + 1)
        r.setflags(write=False)
        return r

    @property
    def coordinates(self) -> np.ndarray:
        return self.radii[:, None]

    @property
    def node_count(self) -> int:
        return self.n_cells + 1

    @property
    def cell_width(self) -> float:
        return float(np.max(np.diff(self.radii)))

    @property
    def sigma(self) -> float:
        return sphere_area(self.N)

    def node_weights(self, kappa: float) -> np.ndarray:
        """Integral of |x|^{-kappa} over each node's dual shell."""
        return _radial_node_weights(self, float(kappa))

    def edges(self, kappa: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Neighbour pairs and their stiffness coefficient for weight |x|^{-kappa}."""
        return _radial_edges(self, float(kappa))

    def load_vector(self, kappa: float, values: np.ndarray) -> np.ndarray:
        """Consistent P1 load: each hat function integrated against the P1 interpolant of values times |x|^{-kappa}."""
        left, cross, right = _radial_mass(self, float(kappa))
        values = np.asarray(values, dtype=float)
        load = np.zeros(self.node_count)
        load[:-1] += left * values[:-1] + cross * values[1:]
        load[1:] += cross * values[:-1] + right * values[1:]
        return load

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[-1] = True
        if self.r_min > 0.0:
            mask[0] = True
        return mask

    def distance_to_boundary(self) -> np.ndarray:
        dist = self.r_max - self.radii
        if self.r_min > 0.0:
            dist = np.minimum(dist, self.radii - self.r_min)
        return dist

    def _shell_range(self, ball: BallSpec) -> tuple[float, float]:
        d, r = ball.center_norm, ball.radius
        return max(0.0, d - r), d + r

    def contains_ball(self, ball: BallSpec) -> bool:
        lo, hi = self._shell_range(ball)
        slack = _INSIDE * self.r_max
        if hi > self.r_max + slack:
            return False
        return not (self.r_min > 0.0 and lo < self.r_min - slack)

    def ball_mask(self, ball: BallSpec) -> np.ndarray:
        lo, hi = self._shell_range(ball)
        slack = _INSIDE * max(1.0, hi)
        return (self.radii >= lo - slack) & (self.radii <= hi + slack)

    def _ball_segments(self, ball: BallSpec) -> tuple[np.ndarray, np.ndarray]:
        """Gauss points in rho and their weights sigma rho^{N-1} * cap fraction."""
        d, r = ball.center_norm, ball.radius
        lo, hi = self._shell_range(ball)
        cuts = [lo, hi]
        if 0.0 < d < r:
            cuts.append(r - d)
        inner = self.radii[(self.radii > lo) & (self.radii < hi)]
        breaks = np.unique(np.concatenate((cuts, inner)))
        g, wg = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
        a, b = breaks[:-1, None], breaks[1:, None]
        rho = (0.5 * (b - a) * g + 0.5 * (a + b)).ravel()
        w = (0.5 * (b - a) * wg).ravel()
        if d == 0.0:
            frac = np.ones_like(rho)
        else:
            frac = cap_fraction(self.N, rho - d, d, r)
        return rho, self.sigma * np.power(rho, self.N - 1.0) * frac * w

    def ball_quadrature(self, ball: BallSpec, kappa: float, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.contains_ball(ball):
            raise BallOutsideDomain(f"ball d={ball.center_norm} r={ball.radius} leaves [{self.r_min}, {self.r_max}]")
        rho, w = self._ball_segments(ball)
        return w * np.power(rho, -kappa), np.interp(rho, self.radii, values)

    def ball_gradient_energy(self, ball: BallSpec, kappa: float, values: np.ndarray) -> float:
        if not self.contains_ball(ball):
            raise BallOutsideDomain(f"ball d={ball.center_norm} r={ball.radius} leaves [{self.r_min}, {self.r_max}]")
        rho, w = self._ball_segments(ball)
        slopes = np.diff(values) / np.diff(self.radii)
        cell = np.clip(np.searchsorted(self.radii, rho) - 1, 0, self.n_cells - 1)
        return float(np.sum(w * np.power(rho, -kappa) * slopes[cell] ** 2))


@functools.lru_cache(maxsize=_CACHE_SIZE)
def _radial_node_weights(grid: RadialGrid, kappa: float) -> np.ndarray:
    lo, hi = _dual_intervals(grid.radii)
    w = grid.sigma * radial_moment(lo, hi, grid.N - 1.0 - kappa)
    w.setflags(write=False)
    return w


@functools.lru_cache(maxsize=_CACHE_SIZE)
def _radial_edges(grid: RadialGrid, kappa: float):
    r = grid.radii
    h = np.diff(r)
    coeff = grid.sigma * radial_moment(r[:-1], r[1:], grid.N - 1.0 - kappa) / h**2
    tail = np.arange(grid.n_cells)
    return tail, tail + 1, coeff


@functools.lru_cache(maxsize=_CACHE_SIZE)
def _radial_mass(grid: RadialGrid, kappa: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per cell: integrals of rho^{N-1-kappa} phi_l^2, phi_l phi_r and phi_r^2 for the two hat functions."""
    m = grid.N - 1.0 - kappa
    lo, hi = grid.radii[:-1], grid.radii[1:]
    h = hi - lo
    # cells with lo <= h by exact moments; there the expansion does not cancel
    m0 = radial_moment(lo, hi, m)
    m1 = radial_moment(lo, hi, m + 1.0)
    m2 = radial_moment(lo, hi, m + 2.0)
    left = (hi**2 * m0 - 2.0 * hi * m1 + m2) / h**2
    cross = (-m2 + (lo + hi) * m1 - lo * hi * m0) / h**2
    right = (m2 - 2.0 * lo * m1 + lo**2 * m0) / h**2
    far = lo > h
    if np.any(far):
        # Gauss-Legendre in t = (rho - lo)/h; (1 + t h/lo)^m is analytic well beyond [0, 1]
        g, wg = np.polynomial.legendre.leggauss(_MASS_GAUSS_ORDER)
        t = 0.5 * (g + 1.0)
        wg = 0.5 * wg
        l0, h0 = lo[far, None], h[far, None]
        dens = wg * np.power(l0 + h0 * t, m) * h0
        left[far] = np.sum(dens * (1.0 - t) ** 2, axis=1)
        cross[far] = np.sum(dens * (1.0 - t) * t, axis=1)
        right[far] = np.sum(dens * t**2, axis=1)
    out = tuple(grid.sigma * v for v in (left, cross, right))
    for v in out:
        v.setflags(write=False)
    return out


def _gauss_box(lows: np.ndarray, highs: np.ndarray, kappa: float, order: int) -> np.ndarray:
    g, wg = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (highs - lows)
    mid = 0.5 * (highs + lows)
    x = mid[:, 0, None] + half[:, 0, None] * g
    y = mid[:, 1, None] + half[:, 1, None] * g
    z = mid[:, 2, None] + half[:, 2, None] * g
    r2 = x[:, :, None, None] ** 2 + y[:, None, :, None] ** 2 + z[:, None, None, :] ** 2
    w = wg[:, None, None] * wg[None, :, None] * wg[None, None, :]
    total = np.einsum("mijk,ijk->m", np.power(r2, -0.5 * kappa), w)
    return total * np.prod(half, axis=1)


def _near_origin(lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    gap = np.maximum(0.0, np.maximum(lows, -highs))
    dist = np.sqrt(np.sum(gap**2, axis=1))
    diag = np.sqrt(np.sum((highs - lows) ** 2, axis=1))
    return dist < 0.5 * diag


def _adaptive_box(lo: np.ndarray, hi: np.ndarray, kappa: float, depth: int) -> tuple[float, float]:
    if depth == _BOX_MAX_DEPTH:
        fine = float(_gauss_box(lo[None], hi[None], kappa, 4)[0])
        coarse = float(_gauss_box(lo[None], hi[None], kappa, 2)[0])
        return fine, abs(fine - coarse)
    mid = 0.5 * (lo + hi)
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    c_lo = np.where(corners == 0, lo, mid)
    c_hi = np.where(corners == 0, mid, hi)
    near = _near_origin(c_lo, c_hi)
    value = float(np.sum(_gauss_box(c_lo[~near], c_hi[~near], kappa, 4))) if np.any(~near) else 0.0
    err = 0.0
    for child_lo, child_hi in zip(c_lo[near], c_hi[near]):
        v, e = _adaptive_box(child_lo, child_hi, kappa, depth + 1)
        value += v
        err += e
    return value, err


def box_weight_integrals(lows: np.ndarray, highs: np.ndarray, kappa: float) -> np.ndarray:
    """Integral of |x|^{-kappa} over each axis-aligned box (rows of lows/highs)."""
    volumes = np.prod(highs - lows, axis=1)
    if kappa == 0.0:
        return volumes
    out = np.empty(len(lows))
    for start in range(0, len(lows), _CHUNK):
        stop = start + _CHUNK
        out[start:stop] = _gauss_box(lows[start:stop], highs[start:stop], kappa, 4)
    for i in np.flatnonzero(_near_origin(lows, highs)):
        value, err = _adaptive_box(lows[i], highs[i], kappa, 0)
        if err > _BOX_RTOL * abs(value):
            raise OriginCellUnresolved(f"cell {i} near the origin: error {err:.3g} against value {value:.3g}")
        out[i] = value
    return out


@dataclass(frozen=True)
class BoxGrid:
    """Tensor grid on [lower, upper] in R^3."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    cells: tuple[int, ...]

    kind = "box"
    N = 3

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "cells", tuple(int(v) for v in self.cells))
        if not len(self.lower) == len(self.upper) == len(self.cells) == 3:
            raise ValueError("box grids are three-dimensional; use a radial grid for other N")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"lower {self.lower} must lie below upper {self.upper}")
        if any(n < 2 for n in self.cells):
            raise ValueError(f"cells {self.cells} must be at least 2 per axis")

    @classmethod
    def cube(cls, half_width: float, cells: int, center=(0.0, 0.0, 0.0)) -> "BoxGrid":
        return cls(
            tuple(c - half_width for c in center),
            tuple(c + half_width for c in center),
            (cells, cells, cells),
        )

    @functools.cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(lo, hi, n + 1) for lo, hi, n in zip(self.lower, self.upper, self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.cells)

    @functools.cached_property
    def points(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        pts.setflags(write=False)
        return pts

    @property
    def coordinates(self) -> np.ndarray:
        return self.points

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_width(self) -> float:
        return max((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))

    def node_weights(self, kappa: float) -> np.ndarray:
        return _box_node_weights(self, float(kappa))

    def edges(self, kappa: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _box_edges(self, float(kappa))

    def load_vector(self, kappa: float, values: np.ndarray) -> np.ndarray:
        """Lumped finite volume load: dual-cell weight times the nodal value."""
        return self.node_weights(kappa) * np.asarray(values, dtype=float)

    def boundary_mask(self) -> np.ndarray:
        idx = np.indices(self.shape)
        mask = np.zeros(self.shape, dtype=bool)
        for axis, n in enumerate(self.cells):
            mask |= (idx[axis] == 0) | (idx[axis] == n)
        return mask.ravel()

    def distance_to_boundary(self) -> np.ndarray:
        lower = np.array(self.lower)
        upper = np.array(self.upper)
        return np.min(np.minimum(self.points - lower, upper - self.points), axis=1)

    def contains_ball(self, ball: BallSpec) -> bool:
        c = np.array(ball.center)
        slack = _INSIDE * max(1.0, ball.radius)
        return bool(np.all(c - ball.radius >= np.array(self.lower) - slack) and np.all(c + ball.radius <= np.array(self.upper) + slack))

    def ball_mask(self, ball: BallSpec) -> np.ndarray:
        dist = np.sqrt(np.sum((self.points - np.array(ball.center)) ** 2, axis=1))
        return dist <= ball.radius * (1.0 + _INSIDE)

    def _checked_mask(self, ball: BallSpec) -> np.ndarray:
        if not self.contains_ball(ball):
            raise BallOutsideDomain(f"ball {ball.center} r={ball.radius} leaves the box")
        mask = self.ball_mask(ball)
        if not np.any(mask):
            raise EmptyBall(f"no nodes inside ball {ball.center} r={ball.radius}")
        return mask

    def ball_quadrature(self, ball: BallSpec, kappa: float, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nodes whose dual cell lies inside the ball, plus sub-cell points for cells cut by the sphere."""
        self._checked_mask(ball)
        lo, hi = _box_dual_cells(self)
        full, cut = _split_by_sphere(lo, hi, ball)
        weights = self.node_weights(kappa)
        pts, share, owner = _cut_samples(lo[cut], hi[cut], ball, kappa)
        cut_values = np.empty(0)
        if len(pts):
            cut_values = interpolate.interpn(self.axes, np.asarray(values, dtype=float).reshape(self.shape), pts, method="linear")
        return (
            np.concatenate((weights[full], weights[cut][owner] * share)),
            np.concatenate((values[full], cut_values)),
        )

    def ball_gradient_energy(self, ball: BallSpec, kappa: float, values: np.ndarray) -> float:
        """Edge energies weighted by the share of each edge's control slab inside the ball."""
        self._checked_mask(ball)
        tail, head, coeff = self.edges(kappa)
        lo, hi = _box_edge_slabs(self)
        full, cut = _split_by_sphere(lo, hi, ball)
        _, share, owner = _cut_samples(lo[cut], hi[cut], ball, kappa)
        frac = np.bincount(owner, weights=share, minlength=int(np.sum(cut)))
        jumps = (values[head] - values[tail]) ** 2 * coeff
        return float(np.sum(jumps[full]) + np.sum(jumps[cut] * frac))


def _split_by_sphere(lo: np.ndarray, hi: np.ndarray, ball: BallSpec) -> tuple[np.ndarray, np.ndarray]:
    """Masks of boxes entirely inside the ball and of boxes the sphere cuts."""
    c = np.array(ball.center)
    near = np.sqrt(np.sum((np.clip(c, lo, hi) - c) ** 2, axis=1))
    far = np.sqrt(np.sum(np.maximum(np.abs(lo - c), np.abs(hi - c)) ** 2, axis=1))
    r = ball.radius * (1.0 + _INSIDE)
    full = far <= r
    return full, ~full & (near < r)


def _cut_samples(lo: np.ndarray, hi: np.ndarray, ball: BallSpec, kappa: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sub-cell midpoints inside the ball, their share of their box's weight and the box they belong to."""
    t = (np.arange(_BALL_SUBCELLS) + 0.5) / _BALL_SUBCELLS
    offsets = np.stack([g.ravel() for g in np.meshgrid(t, t, t, indexing="ij")], axis=1)
    c = np.array(ball.center)
    r2 = (ball.radius * (1.0 + _INSIDE)) ** 2
    pts, shares, owners = [], [], []
    step = max(1, _SAMPLE_CHUNK // len(offsets))
    for start in range(0, len(lo), step):
        l, h = lo[start : start + step], hi[start : start + step]
        p = l[:, None, :] + (h - l)[:, None, :] * offsets[None, :, :]
        w = np.ones(p.shape[:2]) if kappa == 0.0 else np.power(np.sum(p**2, axis=2), -0.5 * kappa)
        w /= np.sum(w, axis=1, keepdims=True)
        inside = np.sum((p - c) ** 2, axis=2) <= r2
        pts.append(p[inside])
        shares.append(w[inside])
        owners.append(np.nonzero(inside)[0] + start)
    if not pts:
        return np.empty((0, 3)), np.empty(0), np.empty(0, dtype=int)
    return np.concatenate(pts), np.concatenate(shares), np.concatenate(owners)


@functools.lru_cache(maxsize=_GEOMETRY_CACHE_SIZE)
def _box_dual_cells(grid: BoxGrid) -> tuple[np.ndarray, np.ndarray]:
    duals = [_dual_intervals(ax) for ax in grid.axes]
    lo = np.stack([g.ravel() for g in np.meshgrid(*[d[0] for d in duals], indexing="ij")], axis=1)
    hi = np.stack([g.ravel() for g in np.meshgrid(*[d[1] for d in duals], indexing="ij")], axis=1)
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


@functools.lru_cache(maxsize=_GEOMETRY_CACHE_SIZE)
def _box_edge_slabs(grid: BoxGrid) -> tuple[np.ndarray, np.ndarray]:
    """Control slab of every edge, in the order of ``_box_edges``: the edge itself times the dual cell across it."""
    tail, head, _ = _box_edges(grid, 0.0)
    dual_lo, dual_hi = _box_dual_cells(grid)
    pts = grid.points
    along = np.abs(pts[head] - pts[tail]) > 0.0
    lo = np.where(along, pts[tail], dual_lo[tail])
    hi = np.where(along, pts[head], dual_hi[tail])
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


@functools.lru_cache(maxsize=_CACHE_SIZE)
def _box_node_weights(grid: BoxGrid, kappa: float) -> np.ndarray:
    lo, hi = _box_dual_cells(grid)
    w = box_weight_integrals(lo, hi, kappa)
    w.setflags(write=False)
    return w


@functools.lru_cache(maxsize=_CACHE_SIZE)
def _box_edges(grid: BoxGrid, kappa: float):
    index = np.arange(grid.node_count).reshape(grid.shape)
    duals = [_dual_intervals(ax) for ax in grid.axes]
    tails, heads, coeffs = [], [], []
    for axis in range(3):
        lead = [slice(None)] * 3
        trail = [slice(None)] * 3
        lead[axis] = slice(0, -1)
        trail[axis] = slice(1, None)
        tail = index[tuple(lead)].ravel()
        head = index[tuple(trail)].ravel()
        # slab: the edge along this axis, dual intervals across it
        spans_lo, spans_hi = [], []
        for k in range(3):
            if k == axis:
                spans_lo.append(grid.axes[k][:-1])
                spans_hi.append(grid.axes[k][1:])
            else:
                spans_lo.append(duals[k][0])
                spans_hi.append(duals[k][1])
        lo = np.stack([g.ravel() for g in np.meshgrid(*spans_lo, indexing="ij")], axis=1)
        hi = np.stack([g.ravel() for g in np.meshgrid(*spans_hi, indexing="ij")], axis=1)
        h = hi[:, axis] - lo[:, axis]
        tails.append(tail)
        heads.append(head)
        coeffs.append(box_weight_integrals(lo, hi, kappa) / h**2)
    return np.concatenate(tails), np.concatenate(heads), np.concatenate(coeffs)


Grid = Union[RadialGrid, BoxGrid]


@dataclass(frozen=True)
class DiscreteField:
    """Nodal samples of a scalar function on a grid."""

    grid: Grid
    values: np.ndarray
    name: str = "u"
    params: Optional[WeightParams] = dataclass_field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.node_count,):
            raise ValueError(f"{self.name}: {values.shape} values for {self.grid.node_count} nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.name}: values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray], name: str = "u", params: Optional[WeightParams] = None) -> "DiscreteField":
        """Evaluate fn on node radii (radial grid) or node points (box grid)."""
        where = grid.radii if grid.kind == "radial" else grid.points
        return cls(grid, np.broadcast_to(fn(where), (grid.node_count,)), name, params)

    def with_values(self, values, name: Optional[str] = None) -> "DiscreteField":
        return DiscreteField(self.grid, values, name or self.name, self.params)

    def ball_quadrature(self, ball: BallSpec, kappa: float) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature weights of |x|^{-kappa} dx over the ball and field values at those points."""
        return self.grid.ball_quadrature(ball, kappa, self.values)

    def ball_gradient_energy(self, ball: BallSpec, kappa: float) -> float:
        return self.grid.ball_gradient_energy(ball, kappa, self.values)


def weighted_integral(params: WeightParams, field: DiscreteField, exponent_weight: float) -> float:
    """Integral of field * |x|^{exponent_weight} over the grid domain."""
    return float(np.sum(field.values * field.grid.node_weights(-exponent_weight)))


def dirichlet_energy(params: WeightParams, field: DiscreteField) -> float:
    """Integral of |grad u_h|^2 |x|^{-2a}."""
    tail, head, coeff = field.grid.edges(2.0 * params.a)
    return float(np.sum(coeff * (field.values[head] - field.values[tail]) ** 2))


def lq_norm(params: WeightParams, field: DiscreteField, q: float, mask: Optional[np.ndarray] = None) -> float:
    """(integral |u|^q |x|^{-bp})^{1/q}, optionally over the nodes selected by mask."""
    if q < 1.0:
        raise ValueError(f"q={q} must be at least 1")
    weights = field.grid.node_weights(params.bp)
    values = np.abs(field.values)
    if mask is not None:
        weights, values = weights[mask], values[mask]
    top = float(np.max(values)) if values.size else 0.0
    if top == 0.0:
        return 0.0
    # scale by the maximum so large q cannot overflow
    return top * float(np.sum(weights * (values / top) ** q)) ** (1.0 / q)


def oscillation(field: DiscreteField, ball: BallSpec) -> float:
    """max - min of nodal values over the nodes inside the ball."""
    mask = field.grid.ball_mask(ball)
    if not np.any(mask):
        raise EmptyBall(f"no nodes inside ball {ball.center} r={ball.radius}")
    inside = field.values[mask]
    return float(np.max(inside) - np.min(inside))


def write_field_csv(field: DiscreteField, path: Union[str, Path]) -> Path:
    """Write a field with the ``# grid=... N=... a=... b=...`` header and 17-digit rows."""
    if field.params is None:
        raise ValueError(f"{field.name}: params are needed for the CSV header")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = field.params
    with path.open("w", newline="") as fh:
        fh.write(f"# grid={field.grid.kind} N={params.N} a={params.a!r} b={params.b!r}\n")
        writer = csv.writer(fh, lineterminator="\n")
        for coords, value in zip(field.grid.coordinates, field.values):
            writer.writerow([f"{c:.17g}" for c in coords] + [f"{value:.17g}"])
    logger.info(f"fields:write name={field.name} nodes={field.grid.node_count} path={path}")
    return path


def read_field_csv(path: Union[str, Path], name: str = "u") -> DiscreteField:
    path = Path(path)
    with path.open(newline="") as fh:
        header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        rows = np.array([[float(v) for v in row] for row in csv.reader(fh) if row])
    N = int(meta["N"])
    params = validate(N, float(meta["a"]), float(meta["b"]), holder_mode=False)
    if meta["grid"] == "radial":
        grid = RadialGrid.from_nodes(N, rows[:, 0])
    else:
        axes = [np.unique(rows[:, k]) for k in range(3)]
        grid = BoxGrid(
            tuple(ax[0] for ax in axes),
            tuple(ax[-1] for ax in axes),
            tuple(len(ax) - 1 for ax in axes),
        )
    return DiscreteField(grid, rows[:, -1], name, params)


def refine(grid: Grid) -> Grid:
    """The same grid with every cell halved."""
    if grid.kind == "radial":
        if grid.explicit_nodes is not None:
            r = grid.radii
            return RadialGrid.from_nodes(grid.N, np.sort(np.concatenate((r, 0.5 * (r[1:] + r[:-1])))))
        return RadialGrid(grid.N, grid.r_min, grid.r_max, 2 * grid.n_cells, grid.spacing)
    return BoxGrid(grid.lower, grid.upper, tuple(2 * n for n in grid.cells))
