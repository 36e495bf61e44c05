"""Numerical laboratory for supremal-energy minimisers.

Solves the vectorial p-Laplace system with P1 finite elements and damped
Newton p-continuation, then builds the per-exponent concentration measures
whose large-p behaviour probes absolute minimality.
"""

from .boundary_data import BoundaryDatum, affine, catalog_lookup, exact_gradient_norm
from .errors import (
    DegenerateMeasureError,
    DegenerateProbeError,
    EmptySubdomainError,
    EvaluationError,
    GradientDomainError,
    InvariantViolationError,
    NewtonDivergenceError,
    SingularSystemError,
)
from .experiments import (
    ExperimentConfig,
    ExperimentSummary,
    PRESET_NAMES,
    export_vtk,
    preset_config,
    run_experiment,
)
from .fem import (
    FEField,
    PContext,
    compute_gradients,
    energy_inf,
    energy_p,
    interpolate_boundary,
    jacobian,
    make_context,
    residual,
)
from .measures import (
    SigmaMeasure,
    absolute_minimiser_probe,
    build_sigma,
    concentration_diagnostics,
    divergence_free_check,
    lp_functional,
    mean_power_level,
    sigma_of_set,
    tail_bound_check,
)
from .mesh import (
    Mesh,
    RegionSpec,
    Subdomain,
    build_annulus_mesh,
    build_square_mesh,
    resolve_subdomain,
)
from .solver import (
    ContinuationPlan,
    NewtonOptions,
    SolveReport,
    default_ladder,
    hp_coupled_run,
    linf_error,
    newton_step,
    solve_p_laplace,
)

__version__ = "0.1.0"
