from dataclasses import dataclass
from typing import Callable

from ckn_lab.errors import UnknownExperiment
from ckn_lab.experiments import inequalities, iteration, measure, regularity, solver
from ckn_lab.experiments.config import ExperimentConfig
from ckn_lab.experiments.reports import ReportWriter

Runner = Callable[[ExperimentConfig, ReportWriter], bool]


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    runner: Runner
    randomized: bool = False


EXPERIMENTS: tuple[Experiment, ...] = (
    Experiment("measure_identities", "closed-form mu_a(B_r(0)) against shell quadrature; centred doubling ratio 2^{N-2a}", measure.measure_identities),
    Experiment("doubling", "doubling ratios of mu_a on random balls in [-1, 1]^N", measure.doubling, randomized=True),
    Experiment("lemma_a1", "measure comparison ratio on random balls against its analytic envelope", measure.lemma_a1, randomized=True),
    Experiment("mms_convergence", "observed order of the radial solver on manufactured solutions", solver.mms_convergence),
    Experiment("harmonic_replacement", "minimality, Pythagoras and idempotence of harmonic replacement", solver.harmonic_replacement_suite, randomized=True),
    Experiment("fundamental_solution", "weak residual decay of |x|^{2+2a-N} on an origin-free annulus", solver.fundamental_solution),
    Experiment("dilation_symmetry", "residual order of the dilated bubble for the constant-K equation", solver.dilation_symmetry),
    Experiment("ckn_suite", "CKN quotient over the field suite, refinement stability and scale invariance", inequalities.ckn_suite_experiment, randomized=True),
    Experiment("poincare_suite", "weighted Poincare, sup bound and weak Harnack ratios", inequalities.poincare_suite_experiment, randomized=True),
    Experiment("alpha_h", "oscillation-decay estimate of the harmonic Hoelder exponent", inequalities.alpha_h),
    Experiment("regularity_report", "measured against predicted Hoelder exponents for f = 1", regularity.regularity_matrix, randomized=True),
    Experiment("moser_ladder", "weighted L^q ladder of a manufactured bounded solution", iteration.moser_ladder_experiment),
    Experiment("lemma_a2_property", "seeded property check of the iteration lemma", iteration.lemma_a2_property, randomized=True),
    Experiment("exponent_algebra", "critical exponent values, exponent identity and k0 thresholds", measure.exponent_algebra),
)

_BY_NAME = {experiment.name: experiment for experiment in EXPERIMENTS}


def get_experiment(name: str) -> Experiment:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise UnknownExperiment(f"{name!r}; see `ckn-lab list`") from None
