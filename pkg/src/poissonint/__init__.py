"""CDFs of one-dimensional Poisson stochastic integrals.

The integral of a deterministic kernel g against a Poisson random measure with
intensity n has a CDF that solves a differential-difference evolution in time.
This package computes that CDF on a uniform mesh with an explicit
finite-difference scheme, reduces general piecewise-monotone kernels to the
solvable shape, and checks itself against independent oracles.
"""

from .density import DensityGrid, central_difference_density, smooth_density
from .diagnostics import (
    ConvergenceProblem,
    ConvergenceTable,
    HolderReport,
    convergence_study,
    holder_constant,
    holder_estimate,
    l1_distance,
)
from .expr import (
    EvalDomainError,
    Expression,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    evaluate,
    format_expression,
    parse,
)
from .model import (
    CdfGrid,
    ControlDensity,
    KernelSegment,
    Mesh,
    NonFiniteDensity,
    SegmentClass,
    SegmentationFailure,
    TimeGrid,
    grid_from_csv,
    grid_from_json_dict,
    grid_to_csv,
    grid_to_json_dict,
    integrate_control,
    segment_kernel,
    sup_control,
)
from .oracles import (
    ArrivalLaw,
    CfSpec,
    QuadratureFailure,
    cf_inversion_cdf,
    cf_inversion_table,
    dkw_epsilon,
    ecdf_distance,
    irwin_hall_cdf,
    mc_sample,
)
from .solver import (
    MassLeakWarning,
    PointMassAtZero,
    SolveConfig,
    SolveReport,
    StabilityViolation,
    StepStencil,
    solve_segment,
    solve_segment_report,
    stability_check,
    step,
)
from .transforms import (
    MeshMismatch,
    MeshTooShort,
    Reduction,
    SegmentPlan,
    compose_piecewise,
    convolve,
    flat_segment_cdf,
    plan_segments,
    poisson_k_max,
    reflect,
    reverse_time,
)

__version__ = "0.1.0"
