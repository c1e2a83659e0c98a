"""Loewner chains, Loewner energy and SLE large deviations."""

from .driving import (
    DrivingFunction,
    EnergyReport,
    energy,
    energy_partition_sup,
    holder_half_norm_bound,
    piecewise_linear_knots,
    scale_driving,
    shift_restart,
)
from .errors import (
    DomainError,
    GeometryError,
    LoewnerLabError,
    MalformedInputError,
    NonSimpleTraceError,
    NumericalAccuracyError,
    ResolutionError,
)
from .flow import (
    CurveSample,
    FlowConfig,
    FlowState,
    RadialDriving,
    WeldingPairs,
    flow_points,
    hcap,
    radial_flow,
    radial_trace,
    trace,
    welding,
)
from .hulls import SlitHull
from .inverse import convergence_table, inverse_transform, rev_driving, reverse_curve, zipper_decomposition
from .minimizers import (
    ConstraintSet,
    MinimizerResult,
    OptimizerConfig,
    compatible,
    minimal_energy,
    minimize_constrained,
    multi_point_construction,
    one_point_minimizer,
    radial_minimizer_driving,
)
from .restriction import (
    TwoSlitConfig,
    commutation_check,
    loop_measure,
    psi_derivatives,
    restricted_energy,
    restriction_identity,
    zipper_hcap,
)
from .sle import (
    PassageConfig,
    estimate_passage,
    ld_rate,
    sample_sle_driver,
    schramm_h,
    simulate_conditioned,
)

__all__ = [name for name in dir() if not name.startswith("_")]
