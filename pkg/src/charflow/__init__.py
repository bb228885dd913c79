"""Energy-conservative characteristic-coordinate solver for the lambda-family
of peakon equations (Camassa-Holm at lambda = 0, Novikov at lambda = 1)."""

from .model import (
    CharflowError,
    CharGrid,
    CharState,
    DiagnosticsReport,
    ModelParams,
    NonlocalFields,
    trig_powers,
    validate_params,
)
from .transform import (
    GaussianBump,
    InitialData,
    PeakonSum,
    Tabulated,
    Zero,
    cumulative_label,
    initialize_state,
    tabulated_from_csv,
)
from .nonlocal_ops import (
    IntegrandPair,
    MetricProfile,
    convolution_bound_check,
    eval_fields,
    eval_nonlocal_fast,
    eval_nonlocal_naive,
    integrand_pair,
    metric_profile,
)
from .evolve import (
    RhsOutput,
    RunConfig,
    RunResult,
    Snapshot,
    diagnostics,
    energy,
    higher_functional,
    rhs,
    run,
    step_rk4,
)
from .reconstruct import (
    BumpTestFunction,
    HolderFit,
    MeasureDecomposition,
    PhysicalSolution,
    holder_exponent_estimate,
    holder_fit_at_cusp,
    lipschitz_in_Lk_check,
    measure_decompose,
    to_physical,
    weak_form_residual,
)

__version__ = "0.1.0"
