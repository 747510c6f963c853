"""Pseudospectral toolkit for fully nonlinear third-order evolution equations on the circle."""

__version__ = "0.1.0"

from .errors import (
    ClassificationMismatch,
    ConfigError,
    DegenerateDispersion,
    DomainError,
    NonZeroMean,
    StepUnstable,
    Torus3Error,
)
from .spectral import (
    DEFAULT_GRID_SIZE,
    PLUS_ETA,
    SobolevIndex,
    TorusFunction,
    rough_tail_data,
    splus,
)
from .equations import (
    DataClass,
    DiagnosticsRecord,
    EquationF,
    ResonanceType,
    catalog,
    classify_resonance,
    diagnostics,
    effective_diffusion,
    get_equation,
    membership,
    parse_equation,
    principal_coefficient,
    resonance_average,
    subprincipal_field,
    time_reversed,
    variable_kdv,
)
from .gauge import (
    GaugeContext,
    build_gauge,
    crucial_identity_residual,
    gauged_energy,
    gauged_energy_difference,
)
from .solver import (
    Scheme,
    SolveParams,
    Termination,
    Trajectory,
    leibniz_symbol_check,
    linear_symbol,
    solve,
    stability_limit,
)
from .experiments import (
    BonaSmithFamily,
    ExperimentKind,
    ExperimentReport,
    Verdict,
    backward_probe,
    bona_smith_run,
    continuity_gaps,
    energy_monitor,
    smoothing_profile,
)
from .reporting import verify_run_dir, write_report
