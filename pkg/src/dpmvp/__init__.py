"""Mean-value schemes for double phase elliptic and normalized parabolic equations."""

from .core import (
    DELTA_GRAD,
    BoundsError,
    CoefficientField,
    DegenerateGradientError,
    DomainError,
    ExponentField,
    Exponents,
    GeometryError,
    GridSpec,
    ScalarField,
    StateError,
    Weights,
    canonical_time_lags,
    compute_M,
    compute_weights,
    gradient_estimate,
)
from .elliptic import (
    DoublePhase,
    PLaplace,
    PxLaplace,
    SolveReport,
    VariableCoefficient,
    elliptic_residual,
    mvp_apply,
    solve_dirichlet,
)
from .expr import parse_expression
from .parabolic import HistoryBuffer, ParabolicSpec, march, parabolic_residual, parabolic_step
from .quadrature import ball_average, ball_extrema, interpolate, shifted_pair_average

__version__ = "0.1.0"
