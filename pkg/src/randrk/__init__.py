"""Randomized Riemann-sum quadrature and randomized explicit one-step ODE
methods for right-hand sides that are irregular in time, with a Monte
Carlo harness for measuring L^p and almost-sure convergence rates."""

from .core import (
    EvaluationError,
    NonFiniteStateError,
    RandomStream,
    RegularityMeta,
    ReseedLimitError,
    TimeGrid,
    VectorField,
    as_state,
    derive_stream,
    draw_tau,
    make_grid,
)
from .harness import (
    AdversarialReport,
    AsRateReport,
    ConstantReport,
    ConvergenceRow,
    ConvergenceTable,
    ExperimentConfig,
    OrderFit,
    adversarial_demo,
    apriori_sup_bound,
    as_rate_check,
    error_constants,
    fit_loglog,
    fit_order,
    mc_lp_error,
    measure_runtime,
    path_error_max,
    run_convergence,
)
from .problems import (
    Problem,
    problem_adversarial_indicator,
    problem_jump_linear,
    problem_manufactured_hoelder,
    problem_singular_lipschitz,
    problem_singular_time,
)
from .quadrature import (
    Integrand,
    QuadraturePrefix,
    left_riemann,
    quad_error_max,
    randomized_riemann,
)
from .solvers import (
    METHODS,
    RANDOMIZED_METHODS,
    TABLEAUX,
    ThetaTableau,
    Trajectory,
    run_tableau,
    solve,
    solve_with_draws,
    step_euler_theta,
    step_rk2_theta,
)

__version__ = "0.1.0"
