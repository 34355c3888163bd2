"""Weighted Dirichlet problems -div(|x|^{-2a} grad u) = |x|^{-bp} f.

Both grids discretise with the vertex-centred finite volume scheme, which is
the P1 finite element method with exact face weights. The stiffness matrix
comes from ``grid.edges(2a)`` and the load from ``grid.load_vector(bp, f)``,
which integrates f against the hat functions on radial grids and lumps it
into dual cells on box grids.
Dirichlet rows are replaced by identity rows and the boundary columns are
moved to the right-hand side, so the system stays symmetric.
"""

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import sympy as sp
from scipy import sparse
from scipy.sparse import linalg as splinalg

from ckn_lab.core.ckn_params import WeightParams
from ckn_lab.core.discrete_fields import DiscreteField, Grid
from ckn_lab.core.weighted_measure import BallSpec
from ckn_lab.errors import (
    BallOutsideDomain,
    BallTooSmall,
    DegenerateExponent,
    ResidualTooLarge,
    SingularCell,
)

logger = logging.getLogger("solver")

DEFAULT_TOL = 1e-10

BoundaryData = Union[DiscreteField, np.ndarray, float]


@dataclass(frozen=True)
class LinearSystem:
    """Assembled weighted system.

    ``stiffness`` is the full symmetric matrix K; ``matrix`` is K with
    Dirichlet rows and columns replaced by identity, matching ``rhs``.
    """

    grid: Grid
    params: WeightParams
    stiffness: sparse.csr_matrix
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    load: np.ndarray
    boundary_mask: np.ndarray
    boundary_values: np.ndarray

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary_mask

    @functools.cached_property
    def interior_matrix(self) -> sparse.csr_matrix:
        idx = np.flatnonzero(self.interior)
        return self.stiffness[idx][:, idx].tocsr()


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    energy: float
    converged: bool


@dataclass(frozen=True)
class RadialProfile:
    """A radial function with its derivative, both vectorised in r."""

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, r):
        return self.value(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class BubbleSolution:
    """u = (1 + r^theta)^{-2/(p-2)} solving the constant-K equation with critical nonlinearity."""

    profile: RadialProfile
    theta: float
    K: float


def stiffness_matrix(grid: Grid, kappa: float) -> sparse.csr_matrix:
    tail, head, coeff = grid.edges(kappa)
    if not np.all(np.isfinite(coeff)):
        raise SingularCell(f"nonfinite face weight for kappa={kappa}")
    n = grid.node_count
    rows = np.concatenate((tail, head, tail, head))
    cols = np.concatenate((head, tail, tail, head))
    data = np.concatenate((-coeff, -coeff, coeff, coeff))
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def _nodal(grid: Grid, data: BoundaryData) -> np.ndarray:
    if isinstance(data, DiscreteField):
        return np.array(data.values)
    return np.broadcast_to(np.asarray(data, dtype=float), (grid.node_count,)).copy()


def assemble(
    params: WeightParams,
    grid: Grid,
    f: DiscreteField,
    dirichlet: BoundaryData = 0.0,
    mask: Optional[np.ndarray] = None,
) -> LinearSystem:
    """Weighted stiffness and load with Dirichlet data on ``mask`` (default: the grid boundary)."""
    if f.grid != grid:
        raise ValueError(f"{f.name} is sampled on a different grid")
    mask = grid.boundary_mask() if mask is None else np.asarray(mask, dtype=bool)
    K = stiffness_matrix(grid, 2.0 * params.a)
    load = grid.load_vector(params.bp, f.values)
    if not np.all(np.isfinite(load)):
        raise SingularCell(f"nonfinite load for bp={params.bp}")
    g = np.where(mask, _nodal(grid, dirichlet), 0.0)
    keep = sparse.diags((~mask).astype(float))
    matrix = (keep @ K @ keep + sparse.diags(mask.astype(float))).tocsr()
    rhs = np.where(mask, g, load - K @ g)
    diag = matrix.diagonal()
    if np.any(diag <= 0.0):
        raise SingularCell(f"{int(np.sum(diag <= 0.0))} nonpositive diagonal entries")
    logger.debug(f"assemble:done nodes={grid.node_count} fixed={int(mask.sum())} nnz={matrix.nnz}")
    return LinearSystem(grid, params, K, matrix, rhs, load, mask, g)


def _jacobi_cg(A: sparse.csr_matrix, b: np.ndarray, x0: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int, float, bool]:
    """Jacobi-preconditioned CG; returns the iterate, iteration count, true relative residual and convergence flag."""
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0, 0.0, True
    inv_diag = 1.0 / A.diagonal()
    M = splinalg.LinearOperator(A.shape, matvec=lambda v: inv_diag * np.ravel(v), dtype=float)
    count = [0]

    def tick(_xk):
        count[0] += 1

    x, info = splinalg.cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=tick)
    rel = float(np.linalg.norm(b - A @ x)) / b_norm
    return x, count[0], rel, info == 0


def solve(system: LinearSystem, tol: float = DEFAULT_TOL, max_iter: Optional[int] = None) -> tuple[DiscreteField, SolveReport]:
    """Solve the assembled system; a stalled solve returns the last iterate with converged=False."""
    n = system.grid.node_count
    max_iter = 10 * n if max_iter is None else max_iter
    x0 = np.where(system.boundary_mask, system.boundary_values, 0.0)
    x, iterations, rel, converged = _jacobi_cg(system.matrix, system.rhs, x0, tol, max_iter)
    energy = float(x @ (system.stiffness @ x))
    if converged:
        logger.info(f"solve:done iterations={iterations} residual={rel:.3e} energy={energy:.12g}")
    else:
        logger.warning(f"solve:stalled iterations={iterations} residual={rel:.3e} tol={tol:.1e}")
    field = DiscreteField(system.grid, x, "u_h", system.params)
    return field, SolveReport(iterations, rel, energy, converged)


def solve_dirichlet(
    params: WeightParams,
    grid: Grid,
    f: DiscreteField,
    dirichlet: BoundaryData = 0.0,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
) -> tuple[DiscreteField, SolveReport]:
    return solve(assemble(params, grid, f, dirichlet), tol, max_iter)


def _exact(x: float) -> sp.Rational:
    return sp.Rational(repr(float(x)))


@functools.lru_cache(maxsize=32)
def _verify_mms(N: int, a: float, bp: float, gamma: float, r_outer: float) -> float:
    r = sp.Symbol("r", positive=True)
    beta = 2 + 2 * _exact(a) - _exact(bp) + _exact(gamma)
    denom = (N - _exact(bp) + _exact(gamma)) * beta
    u = (_exact(r_outer) ** beta - r**beta) / denom
    lhs = -sp.diff(r ** (N - 1 - 2 * _exact(a)) * sp.diff(u, r), r)
    rhs = r ** (N - 1 - _exact(bp) + _exact(gamma))
    worst = 0.0
    for frac in ("0.3", "0.7", "1"):
        at = sp.Rational(frac) * _exact(r_outer)
        scale = abs(rhs.subs(r, at).evalf(30))
        worst = max(worst, float(abs((lhs - rhs).subs(r, at).evalf(30)) / scale))
    return worst


def exact_radial_mms(params: WeightParams, gamma: float, r_outer: float) -> tuple[RadialProfile, Callable[[np.ndarray], np.ndarray]]:
    """Radial u with u(r_outer) = 0 solving the weighted equation for f = r^gamma.

    u(r) = (R^beta - r^beta) / ((N - bp + gamma) beta), beta = 2 + 2a - bp + gamma.
    The closed form is differentiated symbolically before it is handed out.
    """
    N, a, bp = params.N, params.a, params.bp
    beta = 2.0 + 2.0 * a - bp + gamma
    lead = N - bp + gamma
    if abs(beta) < 1e-12 or abs(lead) < 1e-12:
        raise DegenerateExponent(f"gamma={gamma} gives beta={beta}, N-bp+gamma={lead}")
    if not r_outer > 0.0:
        raise ValueError(f"r_outer={r_outer} must be positive")
    defect = _verify_mms(N, a, bp, gamma, r_outer)
    if defect > 1e-20:
        raise ResidualTooLarge(f"manufactured solution fails the radial equation by {defect:.3e}")
    denom = lead * beta

    def u(r):
        return (r_outer**beta - np.power(r, beta)) / denom

    def du(r):
        return -np.power(r, beta - 1.0) / lead

    def f(r):
        return np.power(np.asarray(r, dtype=float), gamma)

    return RadialProfile(u, du, f"mms(gamma={gamma})"), f


def _ball_boundary(grid: Grid, inside: np.ndarray) -> np.ndarray:
    tail, head, _ = grid.edges(0.0)
    crossing = inside[tail] != inside[head]
    edge = np.zeros_like(inside)
    edge[tail[crossing & inside[tail]]] = True
    edge[head[crossing & inside[head]]] = True
    return edge


def harmonic_replacement(params: WeightParams, u: DiscreteField, ball: BallSpec, tol: float = DEFAULT_TOL) -> DiscreteField:
    """The mu_a-harmonic function in the ball with u's trace on the discrete ball boundary; w = u outside."""
    grid = u.grid
    if not grid.contains_ball(ball):
        raise BallOutsideDomain(f"ball {ball.center} r={ball.radius} leaves the grid")
    if grid.kind == "radial" and ball.center_norm > 0.0:
        raise BallOutsideDomain("radial grids only carry balls centred at the origin")
    inside = grid.ball_mask(ball)
    interior = inside & ~_ball_boundary(grid, inside) & ~grid.boundary_mask()
    if int(interior.sum()) < 2:
        raise BallTooSmall(f"{int(interior.sum())} interior nodes in ball r={ball.radius}")
    zero = DiscreteField(grid, np.zeros(grid.node_count), "zero", params)
    system = assemble(params, grid, zero, u, mask=~interior)
    w, report = solve(system, tol)
    logger.info(f"replace:done interior={int(interior.sum())} iterations={report.iterations} energy={report.energy:.12g}")
    return w.with_values(w.values, name=f"{u.name}_harmonic")


def energy_dual_norm(system: LinearSystem, r: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """sqrt(r_I . K_II^{-1} r_I), the residual measured in the dual of the energy norm."""
    r_int = np.asarray(r)[system.interior]
    if not np.any(r_int):
        return 0.0
    A = system.interior_matrix
    z, _, _, _ = _jacobi_cg(A, r_int, np.zeros_like(r_int), tol, 10 * len(r_int))
    return math.sqrt(max(0.0, float(r_int @ z)))


def residual(params: WeightParams, u: DiscreteField, f: DiscreteField, tol: float = DEFAULT_TOL) -> DiscreteField:
    """Nodal weak residual K u - load on non-boundary nodes."""
    system = assemble(params, u.grid, f, u)
    r = np.where(system.interior, system.stiffness @ u.values - system.load, 0.0)
    dual = energy_dual_norm(system, r, tol)
    logger.info(f"residual:done max={float(np.max(np.abs(r))):.3e} dual={dual:.3e}")
    return DiscreteField(u.grid, r, f"residual({u.name})", params)


def residual_norm(params: WeightParams, u: DiscreteField, f: DiscreteField, tol: float = DEFAULT_TOL) -> float:
    """Energy-dual norm of ``residual(params, u, f)``."""
    system = assemble(params, u.grid, f, u)
    r = np.where(system.interior, system.stiffness @ u.values - system.load, 0.0)
    return energy_dual_norm(system, r, tol)


def bubble_solution(params: WeightParams) -> BubbleSolution:
    """Radial solution of -div(|x|^{-2a} grad u) = K |x|^{-bp} u^{p-1} with K constant."""
    m = params.N - 2.0 - 2.0 * params.a
    p = params.p
    theta = m * (p - 2.0) / 2.0
    k = 2.0 / (p - 2.0)

    def value(r):
        return np.power(1.0 + np.power(r, theta), -k)

    def derivative(r):
        return -k * theta * np.power(r, theta - 1.0) * np.power(1.0 + np.power(r, theta), -k - 1.0)

    return BubbleSolution(RadialProfile(value, derivative, "bubble"), theta, m * (m + theta))


def dilate(params: WeightParams, profile: RadialProfile, lam: float) -> RadialProfile:
    """u_lambda(r) = lambda^{(N-2-2a)/2} u(lambda r)."""
    if not lam > 0.0:
        raise ValueError(f"lambda={lam} must be positive")
    scale = lam**params.dilation_exponent

    def value(r):
        return scale * profile.value(lam * np.asarray(r, dtype=float))

    def derivative(r):
        return scale * lam * profile.derivative(lam * np.asarray(r, dtype=float))

    return RadialProfile(value, derivative, f"{profile.label}@{lam:g}")
