"""Empirical verification of excess-risk, optimization-error, and stability
decay rates for ERM and SGD on synthetic problems with certified constants."""

__version__ = "0.1.0"

from .conditions import (  # noqa: F401
    CertificateResult,
    GridSpec,
    certify,
    estimate_constant,
    first_failure,
    hierarchy_audit,
)
from .errors import (  # noqa: F401
    ConfigurationError,
    DivergedError,
    DomainError,
    NotConvergedError,
    RatecheckError,
    TheoremPreconditionError,
)
from .optim import (  # noqa: F401
    ERMSolution,
    StepSchedule,
    Trajectory,
    constant_schedule,
    coupled_sgd_run,
    erm_solve,
    inverse_time_schedule,
    optimization_error,
    polynomial_schedule,
    sgd_run,
    step_size,
)
from .problems import (  # noqa: F401
    ConstantsCertificate,
    Dataset,
    ProblemSpec,
    Sample,
    empirical_gradient,
    empirical_risk,
    make_problem,
    population_gradient,
    population_risk,
    sample_dataset,
)
from .rates import (  # noqa: F401
    ErmEstimator,
    RateFit,
    SgdEstimator,
    SweepConfig,
    THEOREM_TABLE,
    compare_to_theory,
    excess_risk,
    fit_loglog,
    gradient_deviation,
    quantile_curve,
    run_sweep,
    vector_bernstein_bound,
)
from .stability import (  # noqa: F401
    ErmAlgorithm,
    SgdAlgorithm,
    StabilityReport,
    empirical_uniform_stability,
    klochkov_excess_bound,
    theoretical_stability_bound,
)
