"""Admissible parameters of -div(|x|^{-2a} grad u) = f |x|^{-bp} and the exponents derived from them."""

import logging
import math
from dataclasses import dataclass
from enum import Enum

from ckn_lab.errors import (
    AOutOfRange,
    BOutOfRange,
    DimensionTooSmall,
    InvalidAlphaH,
    STooSmall,
)


@dataclass(frozen=True)
class WeightParams:
    """Validated (N, a, b, s) together with the critical exponent p."""

    N: int
    a: float
    b: float
    s: float
    p: float
    strict: bool  # b < a + 1, required by the Hoelder estimate

    @property
    def bp(self) -> float:
        return self.b * self.p

    @property
    def p_over_s(self) -> float:
        return 0.0 if math.isinf(self.s) else self.p / self.s

    @property
    def s_threshold(self) -> float:
        """Smallest excluded integrability exponent p/(p-2)."""
        if self.p <= 2.0:
            return math.inf
        return self.p / (self.p - 2.0)

    @property
    def integrability_margin(self) -> float:
        """p - 2 - p/s, positive exactly when s > p/(p-2)."""
        return self.p - 2.0 - self.p_over_s

    @property
    def harmonic_exponent(self) -> float:
        """2 + 2a - N, the exponent of the radial mu_a-harmonic function."""
        return 2.0 + 2.0 * self.a - self.N

    @property
    def dilation_exponent(self) -> float:
        """(N - 2 - 2a)/2, the scaling weight of the D_a^{1,2} dilation."""
        return (self.N - 2.0 - 2.0 * self.a) / 2.0

    def with_s(self, s: float) -> "WeightParams":
        return validate(self.N, self.a, self.b, s, holder_mode=self.strict)


class LimitingBranch(str, Enum):
    HARMONIC_EXPONENT = "harmonic_exponent"
    UNIT = "unit"
    INTEGRABILITY_B_NONNEG = "integrability_b_nonneg"
    INTEGRABILITY_B_NEG = "integrability_b_neg"


@dataclass(frozen=True)
class HolderBound:
    alpha_sup: float
    limiting_branch: LimitingBranch


def critical_exponent(N: int, a: float, b: float) -> float:
    return 2.0 * N / (N - 2.0 * (1.0 + a - b))


def validate(N: int, a: float, b: float, s: float = math.inf, holder_mode: bool = True) -> WeightParams:
    """Check the admissible region and compute p.

    ``holder_mode`` requests the Hoelder-estimate setting: it enforces the
    strict bound b < a + 1 and s > p/(p-2). Comparisons are exact.
    """
    if N < 3:
        raise DimensionTooSmall(f"N={N} must be at least 3")
    if not a < (N - 2) / 2:
        raise AOutOfRange(f"a={a} must be below (N-2)/2={(N - 2) / 2}")
    if not (a <= b <= a + 1):
        raise BOutOfRange(f"b={b} must lie in [a, a+1]=[{a}, {a + 1}]")
    strict = b < a + 1
    if holder_mode and not strict:
        raise BOutOfRange(f"b={b} must be strictly below a+1={a + 1} for the Hoelder estimate")
    p = critical_exponent(N, a, b)
    params = WeightParams(N=int(N), a=float(a), b=float(b), s=float(s), p=p, strict=strict)
    if holder_mode and not params.s > params.s_threshold:
        raise STooSmall(f"s={s} must exceed p/(p-2)={params.s_threshold}")
    return params


def epsilon_choice(params: WeightParams) -> float:
    """The epsilon = 2(p - 2 - p/s)/p fed into the measure comparison of the Hoelder proof."""
    margin = params.integrability_margin
    if not margin > 0.0:
        raise STooSmall(f"s={params.s} gives p-2-p/s={margin}")
    return 2.0 * margin / params.p


def holder_bound(params: WeightParams, alpha_h_estimate: float) -> HolderBound:
    """Open upper bound on the admissible Hoelder exponent."""
    if not 0.0 < alpha_h_estimate <= 1.0:
        raise InvalidAlphaH(f"alpha_h={alpha_h_estimate} must lie in (0, 1]")
    if not params.strict:
        raise BOutOfRange("holder_bound needs b < a + 1")
    margin = params.integrability_margin
    if not margin > 0.0:
        raise STooSmall(f"s={params.s} gives p-2-p/s={margin}")
    if params.b >= 0.0:
        branch = LimitingBranch.INTEGRABILITY_B_NONNEG
        bound = ((params.N - 2) / 2.0 - params.a) * margin
    else:
        branch = LimitingBranch.INTEGRABILITY_B_NEG
        bound = (params.N / params.p) * margin
    # the unit cap wins a tie with a saturated alpha_h estimate
    candidates = [
        (1.0, LimitingBranch.UNIT),
        (alpha_h_estimate, LimitingBranch.HARMONIC_EXPONENT),
        (bound, branch),
    ]
    alpha_sup, limiting = candidates[0]
    for value, name in candidates[1:]:
        if value < alpha_sup:
            alpha_sup, limiting = value, name
    return HolderBound(alpha_sup=alpha_sup, limiting_branch=limiting)


def moser_ladder(params: WeightParams, k_max: int) -> list[float]:
    """Integrability exponents q_k = p^{k+1}/2^k reached by the iteration."""
    if k_max < 0:
        raise ValueError(f"k_max={k_max} must be nonnegative")
    return [params.p ** (k + 1) / 2.0**k for k in range(k_max + 1)]


def k0_threshold(params: WeightParams) -> int:
    """Smallest k0 >= 0 with (p/2)^{k0} >= 2(p-1)/(p-2)."""
    p = params.p
    if not p > 2.0:
        raise BOutOfRange("k0_threshold needs p > 2")
    target = 2.0 * (p - 1.0) / (p - 2.0)
    k0 = 0
    while (p / 2.0) ** k0 < target:
        k0 += 1
    logging.getLogger("moser").debug(f"ladder:k0 p={p} target={target} k0={k0}")
    return k0


def target_integrability(params: WeightParams) -> float:
    """2p(p-1)/(p-2), the integrability handed to the Hoelder estimate after k0 steps."""
    return 2.0 * params.p * (params.p - 1.0) / (params.p - 2.0)


def conjugate_exponents(params: WeightParams) -> tuple[float, float]:
    """Hoelder pair s(p-1)/p and (p-1)/(1 + p - 2 - p/s) used to split the load term."""
    p = params.p
    margin = params.integrability_margin
    if not margin > 0.0:
        raise STooSmall(f"s={params.s} gives p-2-p/s={margin}")
    first = math.inf if math.isinf(params.s) else params.s * (p - 1.0) / p
    return first, (p - 1.0) / (1.0 + margin)


def identity_defect(params: WeightParams) -> float:
    """(N - bp)(2/p) - (N - 2 - 2a); zero up to rounding."""
    return (params.N - params.bp) * (2.0 / params.p) - (params.N - 2.0 - 2.0 * params.a)
