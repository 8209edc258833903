"""opvol: operator-valued stochastic volatility laboratory.

Simulates jump-driven operator-valued variance processes and
volatility-modulated forwards in truncated Hilbert spaces, and verifies the
explicit robustness bounds relating exact and truncated models.
"""

from opvol.bounds import (
    BoundInputs,
    bound_cpp_diff,
    bound_forward,
    bound_pathwise,
    bound_pricing,
    bound_sqrt,
    bound_tensor_jump,
    bound_tensor_jump_trace,
    bound_variance_generator,
    bound_variance_generator_tail,
    bound_variance_jumps,
    combined_margin,
)
from opvol.experiments import (
    PASS_MARGIN,
    BoundReport,
    ConvergenceRow,
    ConvergenceStudy,
    CoupledScenario,
    ExperimentResult,
    convergence_study,
    default_generator_scenario,
    default_scenario,
    run_experiment,
)
from opvol.forward import (
    ForwardPath,
    ForwardSemigroupSpec,
    forward_sup_error,
    simulate_forward_coupled,
)
from opvol.operators import (
    HilbertVector,
    HSOperator,
    NotPositiveSemidefinite,
    ProjectionSpec,
    matrix_exp,
    norm,
    operator_modulus,
    project_operator,
    project_vector,
    psd_sqrt,
    tensor_product,
)
from opvol.pricing import (
    FunctionalSpec,
    PayoffSpec,
    PricingReport,
    price_option,
    price_robustness_report,
    price_vol_option,
    variance_at,
)
from opvol.processes import (
    PURPOSE_CLOCK,
    PURPOSE_JUMPS,
    PURPOSE_MOMENTS,
    PURPOSE_WIENER,
    CoupledJumpStream,
    InvalidMoments,
    JumpLaw,
    PoissonClock,
    QWienerSpec,
    cp_second_moment,
    cp_second_moment_bound,
    sample_clock,
    sample_jump_stream,
    sample_tensor_jump,
    sample_wiener_increments,
    stream,
)
from opvol.variance import (
    GeneratorSpec,
    NotNormal,
    TimeGrid,
    VariancePath,
    build_grid,
    check_positivity_conditions,
    eigen_tail_sup_sq,
    evolve_coupled,
    evolve_variance,
    generator_eigensystem,
    generator_gap_op_norm,
    generator_matrix,
    generator_op_norm,
    karhunen_loeve_spectrum,
    make_stepper,
    sup_norm_stack,
    truncate_generator,
    variance_sup_error,
)

__all__ = [
    "BoundInputs",
    "BoundReport",
    "ConvergenceRow",
    "ConvergenceStudy",
    "CoupledJumpStream",
    "CoupledScenario",
    "ExperimentResult",
    "ForwardPath",
    "ForwardSemigroupSpec",
    "FunctionalSpec",
    "GeneratorSpec",
    "HSOperator",
    "HilbertVector",
    "InvalidMoments",
    "JumpLaw",
    "NotNormal",
    "NotPositiveSemidefinite",
    "PASS_MARGIN",
    "PURPOSE_CLOCK",
    "PURPOSE_JUMPS",
    "PURPOSE_MOMENTS",
    "PURPOSE_WIENER",
    "PayoffSpec",
    "PoissonClock",
    "PricingReport",
    "ProjectionSpec",
    "QWienerSpec",
    "TimeGrid",
    "VariancePath",
    "bound_cpp_diff",
    "bound_forward",
    "bound_pathwise",
    "bound_pricing",
    "bound_sqrt",
    "bound_tensor_jump",
    "bound_tensor_jump_trace",
    "bound_variance_generator",
    "bound_variance_generator_tail",
    "bound_variance_jumps",
    "build_grid",
    "check_positivity_conditions",
    "combined_margin",
    "convergence_study",
    "cp_second_moment",
    "cp_second_moment_bound",
    "default_generator_scenario",
    "default_scenario",
    "eigen_tail_sup_sq",
    "evolve_coupled",
    "evolve_variance",
    "forward_sup_error",
    "generator_eigensystem",
    "generator_gap_op_norm",
    "generator_matrix",
    "generator_op_norm",
    "karhunen_loeve_spectrum",
    "make_stepper",
    "matrix_exp",
    "norm",
    "operator_modulus",
    "price_option",
    "price_robustness_report",
    "price_vol_option",
    "project_operator",
    "project_vector",
    "psd_sqrt",
    "run_experiment",
    "sample_clock",
    "sample_jump_stream",
    "sample_tensor_jump",
    "sample_wiener_increments",
    "simulate_forward_coupled",
    "stream",
    "sup_norm_stack",
    "tensor_product",
    "truncate_generator",
    "variance_at",
    "variance_sup_error",
]

__version__ = "0.1.0"
