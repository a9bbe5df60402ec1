"""Numerical laboratory for the Orlicz-Laplace equation.

Solves the regularised equation -div(phi'(s)/s grad u) = f by convex
minimisation, builds the nonlinear gradient fields V_psi(grad u), and
verifies local second-order estimates for them at desk scale: ball-pair
oscillation bounds, the pointwise matrix inequality behind them, a
reverse-Holder integrability probe, and the classical counterexamples.
"""

from .errors import (
    BallOutOfDomain,
    BoundaryMismatch,
    BoundViolation,
    ClosenessViolated,
    ConfigError,
    CutoffNotCompact,
    DegenerateDerivative,
    DomainViolation,
    GridTooSmall,
    InadmissibleFamily,
    KernelUnderResolved,
    LinearSolveFailure,
    NonPositiveArgument,
    OrlaplaceError,
)
from .fields import (
    AuxiliaryPair,
    Grid2D,
    MatrixField,
    ScalarField,
    VectorField2,
    auxiliary_pair,
    divergence,
    dv_field_analytic,
    gradient,
    hessian,
    interior_mask,
    jacobian,
    mollify_field,
    v_field,
)
from .olf import read_field, write_field
from .orlicz import (
    ClosenessReport,
    GrowthEnvelope,
    MollifiedOrlicz,
    OrliczFunction,
    RatioReport,
    check_closeness,
    check_ratio,
    closeness,
    cordes_threshold,
    derived_sqrt,
    growth_rate,
    make_family,
    mollify,
    power,
    power_log,
    quadratic,
    ratio,
    sum_powers,
    transfer_kappa0,
)
from .solver import (
    DirichletProblem,
    SolveResult,
    SolverConfig,
    boundary_nodes,
    boundary_values,
    discrete_energy,
    energy_gradient,
    residual_field,
    solve,
)
from .verify import (
    AnalyticField,
    BallPair,
    CaccioppoliReport,
    GehringProbe,
    PointwiseProbe,
    UnitFlux,
    caccioppoli,
    caccioppoli_suite,
    fixtures,
    gehring_probe,
    ibp_check,
    pointwise_probe,
    threshold_bracketing_1d,
)

__version__ = "0.1.0"
