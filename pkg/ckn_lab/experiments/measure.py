"""Experiments on exponent algebra and the weighted measure."""

import logging
import math

import numpy as np

from ckn_lab.core.ckn_params import (
    critical_exponent,
    epsilon_choice,
    identity_defect,
    k0_threshold,
    validate,
)
from ckn_lab.core.discrete_fields import DiscreteField, RadialGrid, weighted_integral
from ckn_lab.core.weighted_measure import (
    BallSpec,
    ball_measure,
    centered_ball_integral,
    doubling_ratio,
    lemma_a1_check,
)
from ckn_lab.experiments.config import ExperimentConfig
from ckn_lab.experiments.reports import ReportWriter

logger = logging.getLogger("experiment")


def exponent_algebra(config: ExperimentConfig, writer: ReportWriter) -> bool:
    rows = []
    checks = [
        ("p(3,0,0)", critical_exponent(3, 0.0, 0.0), 6.0),
        ("p(4,0.5,0.75)", critical_exponent(4, 0.5, 0.75), 3.2),
        ("k0(p=6)", float(k0_threshold(validate(3, 0.0, 0.0))), 1.0),
        ("k0(p=4)", float(k0_threshold(validate(4, 0.0, 0.0))), 2.0),
    ]
    passed = True
    for name, value, expected in checks:
        ok = abs(value - expected) <= 1e-12 * max(1.0, abs(expected))
        passed &= ok
        rows.append((name, value, expected, abs(value - expected), ok))
    rng = np.random.default_rng(config.seed if config.seed is not None else 0)
    worst = 0.0
    count = config.trials or 10_000
    for _ in range(count):
        N = int(rng.integers(3, 9))
        a = rng.uniform(-2.0, (N - 2) / 2.0)
        if a >= (N - 2) / 2.0:
            continue
        b = rng.uniform(a, a + 1.0)
        params = validate(N, a, b, holder_mode=False)
        scale = max(1.0, abs(N - 2.0 - 2.0 * a))
        worst = max(worst, abs(identity_defect(params)) / scale)
    identity_ok = worst <= 1e-12
    passed &= identity_ok
    rows.append((f"identity_defect[{count}]", worst, 0.0, worst, identity_ok))
    writer.table("exponent_report.csv", ["check", "value", "expected", "abs_error", "pass"], rows)
    return passed


def measure_identities(config: ExperimentConfig, writer: ReportWriter) -> bool:
    rows = []
    passed = True
    radii = (0.1, 0.5, 1.0, 2.0, 5.0)
    for N in (3, 4, 5, 6, 7):
        top = (N - 2) / 2.0
        for a in (-1.0, 0.0, 0.5 * top, 0.9 * top):
            params = validate(N, a, a, holder_mode=False)
            for r in radii:
                ball = BallSpec((0.0,) * N, r)
                closed = ball_measure(params, ball).value
                quad = ball_measure(params, ball, force_quadrature=True).value
                err = abs(quad - closed) / closed
                ok = err <= 1e-8
                passed &= ok
                rows.append(("closed_vs_quadrature", N, a, r, quad, closed, err, ok))
            ratio = doubling_ratio(params, (0.0,) * N, 1.0, 0.5)
            expected = 2.0 ** (N - 2.0 * a)
            err = abs(ratio - expected) / expected
            ok = err <= 1e-10
            passed &= ok
            rows.append(("doubling_centered", N, a, 1.0, ratio, expected, err, ok))
        params = validate(N, 0.25 * top, 0.25 * top, holder_mode=False)
        grid = RadialGrid(N, 0.0, 1.0, 256)
        ones = DiscreteField(grid, np.ones(grid.node_count), "one", params)
        computed = weighted_integral(params, ones, -2.0 * params.a)
        expected = centered_ball_integral(N, 2.0 * params.a, 1.0)
        err = abs(computed - expected) / expected
        ok = err <= 1e-6
        passed &= ok
        rows.append(("grid_integral", N, params.a, 1.0, computed, expected, err, ok))
    writer.table(
        "measure_report.csv",
        ["check", "N", "a", "radius", "computed", "expected", "rel_error", "pass"],
        rows,
    )
    logger.info(f"measure_identities:done rows={len(rows)} pass={passed}")
    return passed


def doubling(config: ExperimentConfig, writer: ReportWriter) -> bool:
    params = config.weight_params()
    N = params.N
    rng = np.random.default_rng(config.seed)
    count = config.trials or 100
    rows = []
    worst = {}
    passed = True
    for tau in (0.5, 0.25):
        bound = 10.0 * 2.0 ** (N - 2.0 * params.a) * tau ** (-N)
        worst[tau] = 0.0
        for _ in range(count):
            center = tuple(rng.uniform(-1.0, 1.0, N))
            r = rng.uniform(0.05, 1.0)
            ratio = doubling_ratio(params, center, r, tau)
            ok = ratio <= bound
            passed &= ok
            worst[tau] = max(worst[tau], ratio)
            rows.append((tau, math.sqrt(sum(c * c for c in center)), r, ratio, bound, ok))
    writer.table("doubling_report.csv", ["tau", "center_norm", "radius", "ratio", "bound", "pass"], rows)
    writer.summary(
        "doubling_summary.txt",
        {"max_ratio_tau_0.5": worst[0.5], "max_ratio_tau_0.25": worst[0.25], "pass": passed},
    )
    return passed


def lemma_a1(config: ExperimentConfig, writer: ReportWriter) -> bool:
    params = config.weight_params()
    eps = epsilon_choice(params)
    rng = np.random.default_rng(config.seed)
    count = config.trials or 1000
    rows = []
    worst_ratio, worst_gap = 0.0, 0.0
    for k in range(count):
        rho = 10.0 ** rng.uniform(-3.0, 1.0)
        d = 0.0 if k % 10 == 0 else 10.0 ** rng.uniform(-3.0, 1.0)
        ball = BallSpec.at_distance(params.N, d, rho)
        sample = lemma_a1_check(params, ball, eps)
        gap = sample["ratio"] / sample["envelope"]
        worst_ratio = max(worst_ratio, sample["ratio"])
        worst_gap = max(worst_gap, gap)
        rows.append((d, rho, sample["lhs"], sample["rhs_without_constant"], sample["ratio"], sample["envelope"], gap <= 1.0 + 1e-6))
    passed = worst_gap <= 1.0 + 1e-6
    writer.table(
        "lemma_a1_report.csv",
        ["center_norm", "radius", "lhs", "rhs_core", "ratio", "envelope", "pass"],
        rows,
    )
    writer.summary(
        "lemma_a1_summary.txt",
        {"epsilon": eps, "max_ratio": worst_ratio, "max_ratio_over_envelope": worst_gap, "pass": passed},
    )
    return passed
