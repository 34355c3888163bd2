"""Error types raised by the lab.

Every error carries a stable ``code`` so reports and the CLI can name the
failure without parsing messages.
"""


class LabError(Exception):
    """Base class for all lab errors."""

    code = "lab_error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class DimensionTooSmall(LabError):
    code = "dimension_too_small"


class AOutOfRange(LabError):
    code = "a_out_of_range"


class BOutOfRange(LabError):
    code = "b_out_of_range"


class STooSmall(LabError):
    code = "s_too_small"


class InvalidAlphaH(LabError):
    code = "invalid_alpha_h"


class NonpositiveRadius(LabError):
    code = "nonpositive_radius"


class QuadratureNonconvergence(LabError):
    code = "quadrature_nonconvergence"


class BallOutsideDomain(LabError):
    code = "ball_outside_domain"


class OriginCellUnresolved(LabError):
    code = "origin_cell_unresolved"


class EmptyBall(LabError):
    code = "empty_ball"


class SingularCell(LabError):
    code = "singular_cell"


class NoConvergence(LabError):
    code = "no_convergence"


class DegenerateExponent(LabError):
    code = "degenerate_exponent"


class BallTooSmall(LabError):
    code = "ball_too_small"


class ZeroField(LabError):
    code = "zero_field"


class DegenerateOscillation(LabError):
    code = "degenerate_oscillation"


class NegativeField(LabError):
    code = "negative_field"


class NotSuperharmonic(LabError):
    code = "not_superharmonic"


class InsufficientPoints(LabError):
    code = "insufficient_points"


class EmptySubdomain(LabError):
    code = "empty_subdomain"


class NonpositiveEll(LabError):
    code = "nonpositive_ell"


class ResidualTooLarge(LabError):
    code = "residual_too_large"


class NormOverflow(LabError):
    code = "norm_overflow"


class ExponentOrderViolation(LabError):
    code = "exponent_order_violation"


class UnknownExperiment(LabError):
    code = "unknown_experiment"


class InvalidConfig(LabError):
    code = "invalid_config"

    def __init__(self, key: str, message: str = ""):
        self.key = key
        super().__init__(f"{key}: {message}" if message else key)
