"""Monte-Carlo solvers for parabolic PDEs via their BSDE representations:
backward Euler regression schemes for semilinear problems and a
control-randomization scheme with Poisson jumps for HJB problems."""

__version__ = "0.1.0"

from .controls import Box, FiniteSet
from .engine import (
    IncrementBatch,
    IntensityMeasure,
    JumpBatch,
    PathBatch,
    SimulationError,
    TimeGrid,
    build_time_grid,
    euler_diffusion,
    euler_regime_switching,
    sample_brownian_increments,
    simulate_marked_poisson,
)
from .problems import (
    HJBProblem,
    LinearDriverSpec,
    Reference,
    SemilinearProblem,
    brute_force_control_value,
    build_problem,
    g_operator,
    heat_reference,
    linear_bsde_reference,
    manufactured_semilinear,
    uncertain_vol_reference,
)
from .regression import (
    BasisSpec,
    FitFunction,
    argmax_over_control,
    evaluate_fit,
    fit_least_squares,
)
from .solver import (
    BackwardSolution,
    ErrorReport,
    FixedPointError,
    backward_semilinear_solve,
    compute_error_metric,
    convergence_study,
    hjb_backward_solve,
    implicit_step_fixed_point,
    solve_problem,
)
