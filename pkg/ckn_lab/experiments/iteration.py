"""Iteration experiments: the integrability ladder and the iteration-lemma engine."""

import logging

import numpy as np

from ckn_lab.core.ckn_params import k0_threshold, moser_ladder, target_integrability
from ckn_lab.core.moser_iteration import (
    envelope_for_family,
    find_ell,
    interpolation_check,
    lemma_a2_property_check,
    manufacture_ladder_problem,
    potential,
    random_envelope_spec,
    run_ladder,
)
from ckn_lab.experiments.config import ExperimentConfig
from ckn_lab.experiments.reports import ReportWriter

logger = logging.getLogger("experiment")

INTERPOLATION_RTOL = 0.01


def moser_ladder_experiment(config: ExperimentConfig, writer: ReportWriter) -> bool:
    """Weighted L^q norms of a manufactured bounded solution through k0 + 2 ladder steps."""
    params = config.weight_params()
    grid = config.grid()
    problem = manufacture_ladder_problem(params, grid)
    k0 = k0_threshold(params)
    k_stop = k0 + 2
    margin = 0.25 * config.r_max
    states = run_ladder(params, problem.u, problem.K, k_stop, margin)
    ladder = moser_ladder(params, k_stop)
    exact = [params.p ** (k + 1) / 2.0**k for k in range(k_stop + 1)]
    sequence_ok = ladder == exact and [s.q_k for s in states] == ladder

    dist = grid.distance_to_boundary()
    rows = []
    interpolation_ok = True
    for i, state in enumerate(states):
        lhs = rhs = float("nan")
        if 0 < i < len(states) - 1:
            mask = dist >= state.subdomain_margin
            lhs, rhs, _ = interpolation_check(params, problem.u, states[i - 1].q_k, state.q_k, states[i + 1].q_k, mask)
            interpolation_ok &= lhs <= rhs * (1.0 + INTERPOLATION_RTOL)
        rows.append((state.k, state.q_k, state.norm_q, state.subdomain_margin, state.sup_norm, state.within_bound, lhs, rhs))
    bounded = all(s.within_bound for s in states)
    ell = find_ell(params, potential(params, problem.u, problem.K))

    writer.table(
        "moser_ladder.csv",
        ["k", "q_k", "norm_q", "margin", "sup_norm", "within_bound", "interp_lhs", "interp_rhs"],
        rows,
    )
    passed = sequence_ok and bounded and interpolation_ok
    writer.summary(
        "moser_summary.txt",
        {
            "p": params.p,
            "k0": k0,
            "target_integrability": target_integrability(params),
            "q_k0": ladder[k0],
            "solver_iterations": problem.report.iterations,
            "ell": ell,
            "sequence_exact": sequence_ok,
            "norms_bounded": bounded,
            "interpolation_ok": interpolation_ok,
            "pass": passed,
        },
    )
    return passed


def lemma_a2_property(config: ExperimentConfig, writer: ReportWriter) -> bool:
    """Seeded envelopes alternating centred and off-centre ball families."""
    params = config.weight_params()
    rng = np.random.default_rng(config.seed)
    envelopes = config.envelopes or 20
    trials = config.trials or 1000
    rows, dump = [], []
    passed = True
    for e in range(envelopes):
        spec = random_envelope_spec(rng)
        center = (0.0,) * params.N if e % 2 == 0 else (0.5,) + (0.0,) * (params.N - 1)
        env = envelope_for_family(*spec, params, center)
        report = lemma_a2_property_check(env, trials, config.seed * 1000 + e, params, center)
        passed &= report.passed
        family = report.records[0].family if report.records else ""
        rows.append(
            (e, family, env.A1, env.A2, env.alpha, env.beta, env.gamma, env.tau, env.doubling, env.constant,
             report.trials, report.violations, report.worst_ratio, report.passed)
        )
        if config.dump_trials:
            dump.extend((e, r.trial, r.family, r.adversarial, r.worst_ratio, r.violations) for r in report.records)
    writer.table(
        "lemma_a2_report.csv",
        ["envelope", "family", "A1", "A2", "alpha", "beta", "gamma", "tau", "doubling", "constant",
         "trials", "violations", "worst_ratio", "pass"],
        rows,
    )
    if config.dump_trials:
        writer.table("lemma_a2_trials.csv", ["envelope", "trial", "family", "adversarial", "worst_ratio", "violations"], dump)
    logger.info(f"lemma_a2:suite envelopes={envelopes} trials={trials} pass={passed}")
    return passed
