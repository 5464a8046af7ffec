"""Solvers for countably infinite linear ODE hierarchies with linear-rate
generators: finite-window-exact generating-function closures, operator
splitting against non-affine remainders, stationary solvers, classical
baselines, and a benchmark CLI."""

from ._kernels import NUMBA_ENABLED, backend_name
from .baselines import (
    dense_expm,
    dense_stationary,
    truncated_direct_solve,
    uniformization_solve,
)
from .bench import ExperimentConfig, error_metric, recommend, run_experiment
from .closure import (
    ClosureBlowUp,
    ClosureState,
    bd_geometric_tail,
    closure_rhs,
    closure_solve,
    composition_kernel,
    integrate_closure,
    propagator_matrix,
)
from .integrators import (
    IntegrationFailure,
    OdeProblem,
    PolynomialRhs,
    StepStats,
    rk4_fixed_solve,
    rk45_solve,
    rosenbrock_solve,
    taylor_solve,
)
from .models import (
    HybridModel,
    LinearRateGenerator,
    MatrixTelegraphModel,
    MultiTypeGenerator,
    PolynomialPair,
    SparseOperator,
    model_zoo,
    polynomials_of,
    truncate_generator,
    zoo_names,
)
from .multitype import (
    MultiClosureState,
    integrate_closure_multi,
    multi_closure_rhs,
    multi_composition,
)
from .perturbation import perturbation_solve
from .series import (
    FftWorkspace,
    cauchy_power_coefficients,
    cauchy_product,
    compose_polynomial,
    delta_window,
    fft_cauchy_product,
    tensor_cauchy_product,
)
from .splitting import (
    PropagatorHalf,
    affine_half_from_generator,
    hybrid_strang_richardson_solve,
    hybrid_strang_solve,
    kron_strang_richardson_solve,
    kron_strang_solve,
    remainder_full_step,
    richardson_combine,
    strang_solve,
)
from .stationary import (
    StationaryResult,
    StationarySolveError,
    block_thomas_stationary,
    forward_iteration_stationary,
    pgf_fft_stationary,
    pgf_fft_valid_range,
    power_iteration_stationary,
)
from .telegraph import (
    MatrixMultiplierState,
    binomial_thinning_half,
    integrate_matrix_multiplier,
    matrix_closure_richardson_solve,
    matrix_closure_solve,
    production_half_step,
    purebd_richardson_solve,
    purebd_strang_solve,
    telegraph_characteristic,
)

__version__ = "0.1.0"
