"""Deterministic capital dynamics: rates, schedules, and matrix evolution."""

from .cashflow import (
    BalanceTrajectory,
    FlowImpulse,
    FlowProfile,
    PairedTransfer,
    integrate_flow,
    is_balanced,
    ledger_trajectories,
    make_paired_transfer,
    mean_intensity,
    peak_intensity,
    transport_risk_distance,
)
from .errors import CapdynError
from .expm import expm
from .matevol import (
    EigenEvolution,
    MatrixRateCurve,
    MatrixRatePair,
    UtilityMatrix,
    commutes,
    discrete_evolve_lower,
    discrete_evolve_upper,
    eigen_decompose,
    eigen_evolve,
    matrix_lower_rate,
    matrix_upper_rate,
    ordered_exp,
    volterra_series,
)
from .rates import (
    DiscreteRatePair,
    RangeRate,
    RateCurve,
    UtilityFactor,
    compose_utility,
    compound_lower,
    compound_upper,
    lower_rate,
    lower_to_upper,
    range_rate,
    upper_rate,
    upper_to_lower,
    utility_from_rate,
)
from .scheduler import (
    DiscountedSchedule,
    InstalmentSchedule,
    RiskReport,
    discount_schedule,
    minmax_schedule,
    nominally_fixed_schedule,
    risk_report,
)

__version__ = "0.1.0"
