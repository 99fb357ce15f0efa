"""zoq: query-budgeted zeroth-order optimization.

Gradient estimation from value queries along random Gaussian directions
(single-query, averaging, and projection-alignment aggregation), budgeted
optimization loops with the matching step-size rules, and statistical
verification of the estimators' moments and the optimizers' convergence
bounds.
"""

from .analysis import (
    BoundCurve,
    MomentReport,
    Theorem,
    bound_curve,
    fit_log_linear_rate,
    measure_sigma2,
    mse_closed_form,
    mse_monte_carlo,
    sq_norm_closed_form,
    verification_battery,
)
from .core import (
    DirectionBlock,
    EstimatorKind,
    GradientEstimate,
    Objective,
    SeededRng,
    gaussian_standard,
    sample_direction_block,
)
from .errors import (
    ConfigurationError,
    DegenerateBlockError,
    DivergenceError,
    EvaluationError,
    FitError,
    NumericalError,
)
from .estimators import (
    EstimatorConfig,
    Mode,
    estimate,
    estimate_align,
    estimate_avg,
    estimate_single,
    projection_residual,
)
from .objectives import (
    LogisticObjective,
    QuadraticObjective,
    RosenbrockObjective,
    StochasticLogisticObjective,
    default_start,
    dump_dataset,
    load_dataset,
    make_logistic,
    make_quadratic,
    make_rosenbrock,
    make_stochastic_logistic,
)
from .optimizer import (
    AllocationSchedule,
    StepPolicy,
    Trajectory,
    allocation_expand,
    run_deterministic,
    run_stochastic,
)

__version__ = "0.1.0"
