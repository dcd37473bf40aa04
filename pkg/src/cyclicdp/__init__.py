"""Deterministic simulator and verification suite for cyclic data-parallel
training schedules: explicit timelines, exact memory and communication
accounting, and a delayed-gradient update-rule engine."""

from .comm import (
    BalanceReport,
    balance_report,
    schedule_cdp_ring_reduce,
    schedule_dp_allreduce,
    schedule_zero_transfers,
    scheduled_timeline,
    verify_gradient_reduction,
)
from .costs import (
    CostReport,
    Table1Params,
    Table1Row,
    builtin_heterogeneous_profile,
    closed_form_costs,
    extrapolate_series,
    extrapolation_report,
    measure_costs,
    pass_series,
    peak_ratio,
    triangular_series,
    verify_table1,
)
from .events import ALL_DEVICES, CommEvent, CommKind
from .profiles import (
    CostWeights,
    ModelProfile,
    ParallelismConfig,
    ProfileError,
    Scheme,
    emit_profile,
    load_profile,
    make_homogeneous_profile,
    profile_from_dict,
    profile_to_dict,
)
from .rules import (
    InfeasibleRuleError,
    UpdateRule,
    generic_rule,
    max_delay_rule,
    min_delay_rule,
)
from .schedule import (
    Device,
    Task,
    TaskKind,
    Timeline,
    ValidationReport,
    build_cdp_timeline,
    build_dp_timeline,
    build_mp_timeline,
    build_pp_timeline,
    build_zero_timeline,
    validate_timeline,
)

__version__ = "0.1.0"
