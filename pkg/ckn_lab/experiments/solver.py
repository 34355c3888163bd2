"""Solver experiments: manufactured convergence, harmonic replacement,
fundamental solutions and the dilation symmetry of the bubble family."""

import logging
import math

import numpy as np

from ckn_lab.core.ckn_params import validate
from ckn_lab.core.discrete_fields import DiscreteField, RadialGrid, dirichlet_energy
from ckn_lab.core.elliptic_solver import (
    bubble_solution,
    dilate,
    exact_radial_mms,
    harmonic_replacement,
    residual_norm,
    solve_dirichlet,
)
from ckn_lab.core.inequality_lab import build_field_suite, suite_balls
from ckn_lab.errors import InvalidConfig, NoConvergence
from ckn_lab.experiments.config import ExperimentConfig
from ckn_lab.experiments.reports import ReportWriter

logger = logging.getLogger("experiment")

# relative tolerance on energy identities of replaced fields
ENERGY_RTOL = 1e-7
ORDER_RANGE = (1.8, 2.5)
MAX_FINEST_ERROR = 1e-5
# nodal error treated as exact reproduction by the scheme
EXACT_FLOOR = 1e-9


def observed_orders(errors: list[float], ratio: float = 2.0) -> list[float]:
    """log(e_{k-1}/e_k)/log(ratio) per level; nan on the first level."""
    orders = [math.nan]
    for coarse, fine in zip(errors, errors[1:]):
        if coarse > 0.0 and fine > 0.0:
            orders.append(math.log(coarse / fine) / math.log(ratio))
        else:
            orders.append(math.inf)
    return orders


def _mms_errors(params, grids, gamma, tol, max_iter):
    profile, f = exact_radial_mms(params, gamma, grids[0].r_max)
    errors = []
    for grid in grids:
        load = DiscreteField.sample(grid, f, "f", params)
        exact = DiscreteField.sample(grid, profile, "u", params)
        u_h, report = solve_dirichlet(params, grid, load, exact, tol, max_iter)
        if not report.converged:
            raise NoConvergence(f"mms solve on {grid.n_cells} cells stalled at residual {report.relative_residual:.3e}")
        errors.append(float(np.max(np.abs(u_h.values - exact.values))))
    return errors


def order_check(errors: list[float], orders: list[float]) -> bool:
    """Each refinement lands in ORDER_RANGE unless it already reproduces the solution to EXACT_FLOOR."""
    lo, hi = ORDER_RANGE
    steps = all(fine <= EXACT_FLOOR or lo <= order <= hi for fine, order in zip(errors[1:], orders[1:]))
    return steps and errors[-1] <= MAX_FINEST_ERROR


def mms_convergence(config: ExperimentConfig, writer: ReportWriter) -> bool:
    """Observed orders of the plain problem and of the weighted problem on the ball and on an annulus.

    With f = 1 the weighted solution is linear in r and the scheme reproduces
    it; f = r gives a profile outside the discrete space on both domains.
    """
    tol = min(config.solver_tol, 1e-12)
    sizes = [config.n_cells * 2**k for k in range(config.levels)]
    plain = validate(config.N, 0.0, 0.0, holder_mode=False)
    weighted = config.weight_params()
    if weighted.a == 0.0 and weighted.b == 0.0:
        weighted = validate(config.N, 0.25, 0.25, holder_mode=False)
    cases = [
        ("plain", plain, 0.0, 0.0),
        ("weighted_ball", weighted, 0.0, 0.0),
        ("weighted_ball_linear_f", weighted, 0.0, 1.0),
        ("weighted_annulus_linear_f", weighted, 0.25, 1.0),
    ]
    rows = []
    summary = {}
    passed = True
    for name, params, r_min, gamma in cases:
        grids = [RadialGrid(config.N, r_min, 1.0, n) for n in sizes]
        errors = _mms_errors(params, grids, gamma, tol, config.solver_max_iter)
        orders = observed_orders(errors)
        for level, (grid, err, order) in enumerate(zip(grids, errors, orders)):
            rows.append((name, level, grid.cell_width, err, order))
        ok = order_check(errors, orders)
        passed &= ok
        worst = min(orders[1:]) if len(orders) > 1 else math.nan
        summary[f"{name}_min_order"] = worst
        summary[f"{name}_finest_error"] = errors[-1]
        summary[f"{name}_exact"] = errors[-1] <= EXACT_FLOOR
        summary[f"{name}_pass"] = ok
        logger.info(f"mms:case name={name} min_order={worst:.4f} finest={errors[-1]:.3e} pass={ok}")
    writer.table("mms_convergence.csv", ["case", "level", "h", "max_error", "observed_order"], rows)
    summary["pass"] = passed
    writer.summary("mms_summary.txt", summary)
    return passed


def harmonic_replacement_suite(config: ExperimentConfig, writer: ReportWriter) -> bool:
    """Minimality, the energy Pythagoras identity and idempotence of harmonic replacement."""
    params = config.weight_params()
    grid = config.grid()
    if grid.kind == "radial" and grid.r_min > 0.0:
        raise InvalidConfig("grid.r_min", "harmonic replacement on radial grids needs balls centred at the origin")
    count = config.trials or 50
    tol = min(config.solver_tol, 1e-12)
    fields = build_field_suite(params, grid, config.seed, count)
    balls = suite_balls(grid, config.seed + 1, count)
    rows = []
    passed = True
    for k, (u, ball) in enumerate(zip(fields, balls)):
        w = harmonic_replacement(params, u, ball, tol)
        again = harmonic_replacement(params, w, ball, tol)
        e_u = dirichlet_energy(params, u)
        e_w = dirichlet_energy(params, w)
        e_diff = dirichlet_energy(params, u.with_values(u.values - w.values))
        e_again = dirichlet_energy(params, again)
        slack = ENERGY_RTOL * max(e_u, 1e-300)
        minimal = e_w <= e_u + slack
        pythagoras = abs(e_u - e_w - e_diff) <= slack
        idempotent = abs(e_again - e_w) <= slack
        ok = minimal and pythagoras and idempotent
        passed &= ok
        rows.append((k, u.name, ball.center_norm, ball.radius, e_u, e_w, e_diff, e_again, minimal, pythagoras, idempotent))
    writer.table(
        "harmonic_replacement.csv",
        ["trial", "field", "center_norm", "radius", "energy_u", "energy_w", "energy_u_minus_w", "energy_ww", "minimal", "pythagoras", "idempotent"],
        rows,
    )
    logger.info(f"replace:suite trials={len(rows)} pass={passed}")
    return passed


def fundamental_solution(config: ExperimentConfig, writer: ReportWriter) -> bool:
    """Weak residual of |x|^{2+2a-N} on an annulus avoiding the origin."""
    N = config.N
    levels = max(config.levels, 3)
    rows = []
    passed = True
    for a in (-0.5, 0.0, 0.4):
        if not a < (N - 2) / 2.0:
            continue
        params = validate(N, a, a, holder_mode=False)
        exponent = 2.0 + 2.0 * a - N
        norms, widths = [], []
        for k in range(levels):
            grid = RadialGrid(N, 0.5, 2.0, config.n_cells * 2**k)
            widths.append(grid.cell_width)
            u = DiscreteField.sample(grid, lambda r: np.power(r, exponent), "fundamental", params)
            zero = DiscreteField(grid, np.zeros(grid.node_count), "zero", params)
            norms.append(residual_norm(params, u, zero, min(config.solver_tol, 1e-12)))
        for k, norm in enumerate(norms):
            ratio = norms[k - 1] / norm if k and norm > 0.0 else math.nan
            ok = k == 0 or norm == 0.0 or ratio >= 3.3
            passed &= ok
            rows.append((a, k, widths[k], norm, ratio, ok))
    writer.table("fundamental_solution.csv", ["a", "level", "h", "residual_dual_norm", "reduction", "pass"], rows)
    return passed


def dilation_symmetry(config: ExperimentConfig, writer: ReportWriter) -> bool:
    """The rescaled bubble keeps solving the constant-K equation; its discrete residual shrinks at second order."""
    params = config.weight_params()
    bubble = bubble_solution(params)
    profile = dilate(params, bubble.profile, 2.0)
    p = params.p
    norms, widths = [], []
    for k in range(max(config.levels, 3)):
        grid = RadialGrid(params.N, 0.0, 2.0, config.n_cells * 2**k)
        u = DiscreteField.sample(grid, profile, "bubble", params)
        f = u.with_values(bubble.K * np.abs(u.values) ** (p - 1.0), "K u^(p-1)")
        norms.append(residual_norm(params, u, f, min(config.solver_tol, 1e-12)))
        widths.append(grid.cell_width)
    orders = observed_orders(norms)
    rows = [(k, h, n, o) for k, (h, n, o) in enumerate(zip(widths, norms, orders))]
    writer.table("dilation_symmetry.csv", ["level", "h", "residual_dual_norm", "observed_order"], rows)
    worst = min(orders[1:])
    passed = worst >= 1.8
    writer.summary(
        "dilation_summary.txt",
        {"lambda": 2.0, "theta": bubble.theta, "K": bubble.K, "min_order": worst, "pass": passed},
    )
    return passed
