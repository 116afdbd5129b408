"""Numerical laboratory for the max-type recursion with geometric offspring."""
from .asymptotics import (
    CoefficientEstimate,
    CoefficientTarget,
    CorollaryValues,
    Expansion,
    ExpansionValue,
    RegimeConstants,
    compare,
    corollary_values,
    estimate_coefficients,
    expand_critical,
    expand_subcritical,
    expand_supercritical,
)
from .exceptions import (
    BracketNotFoundError,
    DomainError,
    GeodrError,
    IdentityViolation,
    InsufficientLengthError,
    PrecisionInsufficientError,
    RegimeMismatchError,
    ResourceLimitError,
)
from .expvariant import ExponentialTypeLaw, ExpVariantConfig, exp_iterate, exp_step
from .glaw import (
    GeometricTypeLaw,
    ModelConfig,
    PrecisionMode,
    ResidualRow,
    StepRecord,
    Trajectory,
    identity_residuals,
    iterate,
    log_mean,
    mean,
    pgf,
    pgf_radius,
    step,
    survival,
    telescoped_p_over_r,
)
from .oracle import (
    McConfig,
    McSummary,
    TruncatedPmf,
    conditional_chisquare,
    geometric_type_pmf,
    mc_sample,
    propagate_pmf,
    tv_distance,
    unit_mass,
)
from .regime import (
    CriticalLocateResult,
    FreeEnergy,
    PhaseDiagram,
    Regime,
    RegimeReport,
    centered_grid,
    classify,
    constant_K,
    constant_Q,
    critical_locate,
    free_energy,
    k_partial_products,
    phase_scan,
)

__version__ = "0.1.0"
