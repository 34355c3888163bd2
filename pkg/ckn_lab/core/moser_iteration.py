"""Integrability bootstrap for -div(|x|^{-2a} grad u) = K |x|^{-bp} |u|^{p-2} u.

Three pieces live here: the smallness condition on the potential
V = K |u|^{p-2}, the ladder of weighted L^q norms q_{k+1} = p q_k / 2, and
a property-checked engine for the iteration lemma that turns a one-scale
decay estimate into a decay estimate over all scales.
"""

import functools
import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ckn_lab.core.ckn_params import WeightParams, moser_ladder
from ckn_lab.core.discrete_fields import DiscreteField, Grid, lq_norm
from ckn_lab.core.elliptic_solver import (
    SolveReport,
    assemble,
    bubble_solution,
    dilate,
    energy_dual_norm,
    solve,
)
from ckn_lab.core.inequality_lab import ckn_suite
from ckn_lab.core.weighted_measure import BallSpec, ball_measure
from ckn_lab.errors import (
    EmptySubdomain,
    ExponentOrderViolation,
    NonpositiveEll,
    NormOverflow,
    ResidualTooLarge,
)

logger = logging.getLogger("moser")

ELL_START = 1e-3
ELL_STEPS = 40
RESIDUAL_TOL = 1e-6
PAIRS_PER_TRIAL = 64
_RTOL = 1e-9


@dataclass(frozen=True)
class PotentialSplit:
    ell: float
    tail_mass: float
    bound_required: float
    satisfied: bool


@dataclass(frozen=True)
class LadderState:
    k: int
    q_k: float
    norm_q: float
    subdomain_margin: float
    sup_norm: float = math.nan
    within_bound: bool = True


@dataclass(frozen=True)
class LadderProblem:
    """A bounded discrete solution of the critical equation and its potential."""

    u: DiscreteField
    K: DiscreteField
    load: DiscreteField
    report: SolveReport


@dataclass(frozen=True)
class IterationEnvelope:
    A1: float
    A2: float
    alpha: float
    beta: float
    gamma: float
    tau: float
    constant: float
    doubling: float = 1.0


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    family: str
    adversarial: bool
    worst_ratio: float
    violations: int


@dataclass(frozen=True)
class LemmaA2Report:
    trials: int
    violations: int
    worst_ratio: float
    doubling_grid: float
    doubling_ok: bool
    records: list[TrialRecord] = dataclass_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.doubling_ok and self.violations == 0


@functools.lru_cache(maxsize=32)
def _suite_ckn_constant(params: WeightParams, grid: Grid) -> float:
    _, worst = ckn_suite(params, grid, seed=0, count=12)
    return worst**2


def _node_radii(grid: Grid) -> np.ndarray:
    if grid.kind == "radial":
        return grid.radii
    return np.sqrt(np.sum(grid.points**2, axis=1))


def smallness_check(params: WeightParams, V: DiscreteField, ell: float, ckn_constant: Optional[float] = None, q: Optional[float] = None) -> PotentialSplit:
    """Mass of |x|^{-bp}|V|^{p/(p-2)} where |V| >= ell plus outside B_ell(0), against the required bound.

    ``ckn_constant`` is the squared CKN quotient bound; by default the
    largest quotient over the built-in field suite on V's grid.
    """
    if not ell > 0.0:
        raise NonpositiveEll(f"ell={ell}")
    e = params.p / (params.p - 2.0)
    q = params.p if q is None else q
    C = _suite_ckn_constant(params, V.grid) if ckn_constant is None else ckn_constant
    density = V.grid.node_weights(params.bp) * np.abs(V.values) ** e
    large = np.abs(V.values) >= ell
    far = _node_radii(V.grid) >= ell
    tail = float(np.sum(density[large]) + np.sum(density[far]))
    bound = (min(1.0 / 8.0, 2.0 / (q + 4.0)) / C) ** e
    return PotentialSplit(ell, tail, bound, tail <= bound)


def find_ell(params: WeightParams, V: DiscreteField, ckn_constant: Optional[float] = None) -> Optional[float]:
    """Smallest ell = 1e-3 * 2^k, k < 40, satisfying the smallness condition; None if there is none."""
    C = _suite_ckn_constant(params, V.grid) if ckn_constant is None else ckn_constant
    for k in range(ELL_STEPS):
        split = smallness_check(params, V, ELL_START * 2.0**k, C)
        if split.satisfied:
            logger.info(f"ell:found ell={split.ell:.6g} tail={split.tail_mass:.3e} bound={split.bound_required:.3e}")
            return split.ell
    logger.info(f"ell:none field={V.name}")
    return None


def potential(params: WeightParams, u: DiscreteField, K: DiscreteField) -> DiscreteField:
    """V = K |u|^{p-2}."""
    return u.with_values(K.values * np.abs(u.values) ** (params.p - 2.0), name=f"V({u.name})")


def _margin(schedule: Union[float, Callable[[int], float]], k: int, k_stop: int) -> float:
    if callable(schedule):
        return float(schedule(k))
    return float(schedule) * (1.0 + k) / (k_stop + 1.0)


def _discrete_residual(params: WeightParams, u: DiscreteField, K: DiscreteField, f: Optional[DiscreteField]) -> float:
    load = K.values * np.abs(u.values) ** (params.p - 2.0) * u.values
    if f is not None:
        load = load + f.values
    system = assemble(params, u.grid, u.with_values(load, "load"), u)
    r = np.where(system.interior, system.stiffness @ u.values - system.load, 0.0)
    energy = float(u.values @ (system.stiffness @ u.values))
    return energy_dual_norm(system, r) / max(math.sqrt(energy), 1e-300)


def run_ladder(
    params: WeightParams,
    u: DiscreteField,
    K: DiscreteField,
    k_stop: int,
    margin_schedule: Union[float, Callable[[int], float]],
    f: Optional[DiscreteField] = None,
    residual_tol: float = RESIDUAL_TOL,
) -> list[LadderState]:
    """Weighted L^{q_k} norms of u on nested subdomains for k = 0..k_stop.

    A float schedule is the final margin; step k uses margin_0 (1 + k)/(k_stop + 1).
    """
    defect = _discrete_residual(params, u, K, f)
    if defect > residual_tol:
        raise ResidualTooLarge(f"relative dual residual {defect:.3e} > {residual_tol:.1e}")
    dist = u.grid.distance_to_boundary()
    weights = u.grid.node_weights(params.bp)
    states = []
    for k, q in enumerate(moser_ladder(params, k_stop)):
        margin = _margin(margin_schedule, k, k_stop)
        mask = dist >= margin
        if not np.any(mask):
            raise EmptySubdomain(f"ladder step {k}: no nodes at margin {margin:.3g}")
        norm = lq_norm(params, u, q, mask)
        if not math.isfinite(norm):
            raise NormOverflow(f"ladder step {k}: L^{q:.4g} norm is {norm}")
        sup = float(np.max(np.abs(u.values[mask])))
        cap = sup * float(np.sum(weights[mask])) ** (1.0 / q)
        states.append(LadderState(k, q, norm, margin, sup, norm <= cap * (1.0 + 1e-12)))
        logger.debug(f"ladder:step k={k} q={q:.6g} norm={norm:.12g} margin={margin:.4g}")
    logger.info(f"ladder:done steps={len(states)} q_max={states[-1].q_k:.6g}")
    return states


def interpolation_check(params: WeightParams, u: DiscreteField, q_low: float, q: float, q_high: float, mask: Optional[np.ndarray] = None) -> tuple[float, float, bool]:
    """||u||_q against ||u||_{q_low}^theta ||u||_{q_high}^{1-theta}, 1/q = theta/q_low + (1-theta)/q_high."""
    if not 1.0 <= q_low < q < q_high:
        raise ValueError(f"need 1 <= q_low < q < q_high, got {q_low}, {q}, {q_high}")
    theta = (1.0 / q - 1.0 / q_high) / (1.0 / q_low - 1.0 / q_high)
    lhs = lq_norm(params, u, q, mask)
    rhs = lq_norm(params, u, q_low, mask) ** theta * lq_norm(params, u, q_high, mask) ** (1.0 - theta)
    return lhs, rhs, lhs <= rhs * (1.0 + 1e-10)


def manufacture_ladder_problem(params: WeightParams, grid: Grid, lam: float = 1.0, tol: float = 1e-11) -> LadderProblem:
    """Solve the linear problem with data from the explicit bubble, then set K nodally.

    With K_i = f_i / (|u_i|^{p-2} u_i) the discrete nonlinear equation holds
    exactly for the computed u_h.
    """
    bubble = bubble_solution(params)
    profile = bubble.profile if lam == 1.0 else dilate(params, bubble.profile, lam)
    r = _node_radii(grid)
    exact = profile(r)
    load = DiscreteField(grid, bubble.K * exact ** (params.p - 1.0), "bubble_load", params)
    system = assemble(params, grid, load, exact)
    u, report = solve(system, tol)
    if np.any(u.values <= 0.0):
        raise ResidualTooLarge("discrete bubble lost positivity")
    K = load.values / (u.values ** (params.p - 1.0))
    logger.info(f"ladder:manufactured nodes={grid.node_count} K_range=[{K.min():.6g}, {K.max():.6g}]")
    return LadderProblem(
        u.with_values(u.values, "u_bubble"),
        DiscreteField(grid, K, "K", params),
        load,
        report,
    )


def lemma_a2_constant(A1: float, A2: float, alpha: float, beta: float, gamma: float, doubling: float = 1.0) -> IterationEnvelope:
    """tau = min(A1^{-1/(gamma-alpha)}, 1/2) and C = max(C_d, C_d^3 / (tau (1 - tau^{beta-gamma}))).

    ``doubling`` is C_d(tau), the largest mu(B_r)/mu(B_{tau r}) of the measure in use.
    """
    if not 0.0 < alpha < gamma < beta:
        raise ExponentOrderViolation(f"need 0 < alpha < gamma < beta, got {alpha}, {gamma}, {beta}")
    if not (A1 > 0.0 and A2 > 0.0):
        raise ValueError(f"A1={A1}, A2={A2} must be positive")
    if doubling < 1.0:
        raise ValueError(f"doubling={doubling} must be at least 1")
    tau = min(A1 ** (-1.0 / (gamma - alpha)), 0.5)
    constant = max(doubling, doubling**3 / (tau * (1.0 - tau ** (beta - gamma))))
    return IterationEnvelope(A1, A2, alpha, beta, gamma, tau, constant, doubling)


def dyadic_radii(R: float, tau: float, substeps: int = 3, levels: Optional[int] = None) -> np.ndarray:
    """R tau^{i/substeps} for i = 0..levels*substeps; levels defaults to about six decades."""
    if levels is None:
        levels = max(2, int(6.0 / math.log10(1.0 / tau)))
    return R * tau ** (np.arange(levels * substeps + 1) / substeps)


def family_measures(params: WeightParams, center: Sequence[float], radii: np.ndarray) -> np.ndarray:
    return np.array([ball_measure(params, BallSpec(tuple(center), float(r))).value for r in radii])


def empirical_doubling_constant(measures: np.ndarray, substeps: int) -> float:
    """Largest mu_j / mu_{j+g} over index gaps g <= substeps (one tau step)."""
    worst = 1.0
    for gap in range(1, substeps + 1):
        if gap < len(measures):
            worst = max(worst, float(np.max(measures[:-gap] / measures[gap:])))
    return worst


def envelope_for_family(
    A1: float, A2: float, alpha: float, beta: float, gamma: float,
    params: WeightParams, center: Sequence[float], R: float = 1.0, substeps: int = 3,
) -> IterationEnvelope:
    """Envelope whose doubling constant is the one realised by mu_a on the tau-adapted radii."""
    tau = lemma_a2_constant(A1, A2, alpha, beta, gamma).tau
    radii = dyadic_radii(R, tau, substeps)
    doubling = empirical_doubling_constant(family_measures(params, center, radii), substeps)
    return lemma_a2_constant(A1, A2, alpha, beta, gamma, doubling)


def build_phi(env: IterationEnvelope, radii: np.ndarray, mu: np.ndarray, top: float, jitter: np.ndarray) -> np.ndarray:
    """Nonincreasing-in-index Phi satisfying the one-scale hypothesis on every grid pair.

    Each value is the largest the hypothesis allows against all larger radii,
    scaled by ``jitter`` in (0, 1]; jitter = 1 saturates it.
    """
    phi = np.empty(len(radii))
    cap_self = env.A1 < 1.0
    for i in range(len(radii)):
        if i == 0:
            value = top
        else:
            j = np.arange(i)
            allowed = env.A1 * (mu[i] / mu[j]) * (radii[i] / radii[j]) ** (-env.alpha) * phi[j] + env.A2 * mu[j] * radii[j] ** (-env.beta)
            value = min(phi[i - 1], float(np.min(allowed)))
        if cap_self:
            value = min(value, env.A2 * mu[i] * radii[i] ** (-env.beta) / (1.0 - env.A1))
        phi[i] = jitter[i] * value
    return phi


def _conclusion_ratios(env: IterationEnvelope, radii: np.ndarray, mu: np.ndarray, phi: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    # rho = radii[i] <= r = radii[j]
    bound = env.constant * (
        (mu[i] / mu[j]) * (radii[i] / radii[j]) ** (-env.gamma) * phi[j] + env.A2 * mu[i] * radii[i] ** (-env.beta)
    )
    return phi[i] / bound


def lemma_a2_property_check(
    env: IterationEnvelope,
    n_trials: int,
    seed: int,
    params: WeightParams,
    center: Optional[Sequence[float]] = None,
    R: float = 1.0,
    substeps: int = 3,
) -> LemmaA2Report:
    """Build Phi satisfying the hypothesis on the tau-adapted radii and test the conclusion.

    Every fourth trial is adversarial (saturated at every scale) and every
    tenth starts from Phi = 0. Trial t draws from default_rng([seed, t]).
    """
    center = tuple(center) if center is not None else (0.0,) * params.N
    radii = dyadic_radii(R, env.tau, substeps)
    mu = family_measures(params, center, radii)
    doubling_grid = empirical_doubling_constant(mu, substeps)
    doubling_ok = env.doubling >= doubling_grid * (1.0 - _RTOL)
    family = "centered" if not any(center) else "off_center"
    n = len(radii)
    records, violations, worst = [], 0, 0.0
    for t in range(n_trials):
        rng = np.random.default_rng([seed, t])
        adversarial = t % 4 == 0
        jitter = np.ones(n) if adversarial else rng.uniform(0.5, 1.0, n)
        top = 0.0 if t % 10 == 9 else env.A2 * mu[0] * R ** (-env.beta) * rng.uniform(0.1, 10.0)
        phi = build_phi(env, radii, mu, top, jitter)
        a = rng.integers(0, n, PAIRS_PER_TRIAL)
        b = rng.integers(0, n, PAIRS_PER_TRIAL)
        i, j = np.maximum(a, b), np.minimum(a, b)
        ratios = _conclusion_ratios(env, radii, mu, phi, i, j)
        bad = int(np.sum(ratios > 1.0 + _RTOL))
        trial_worst = float(np.max(ratios))
        violations += bad
        worst = max(worst, trial_worst)
        records.append(TrialRecord(t, family, adversarial, trial_worst, bad))
    level = logging.INFO if violations == 0 and doubling_ok else logging.WARNING
    logger.log(
        level,
        f"lemma_a2:done trials={n_trials} violations={violations} worst={worst:.6g} "
        f"doubling={env.doubling:.6g} grid_doubling={doubling_grid:.6g}",
    )
    return LemmaA2Report(n_trials, violations, worst, doubling_grid, bool(doubling_ok), records)


def random_envelope_spec(rng: np.random.Generator) -> tuple[float, float, float, float, float]:
    """A1, A2, alpha, beta, gamma drawn with 0.1 < alpha < gamma < beta < 4."""
    alpha = rng.uniform(0.1, 2.5)
    gamma = alpha + rng.uniform(0.3, 0.7)
    beta = gamma + rng.uniform(0.3, 0.8)
    return rng.uniform(0.5, 8.0), rng.uniform(0.1, 10.0), alpha, beta, gamma
