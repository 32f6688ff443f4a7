"""Online scheduling of inelastic complex power demands.

Sequentially arriving demands (complex apparent power, utility, active
interval) are accepted or rejected immediately, maximizing total utility
subject to per-slot apparent-power capacity or to feeder voltage limits
mapped onto an equivalent capacity form.  The engine runs two fractional
primal-dual streams (one for small demands, one for large) and rounds
them online with a single shared coin, correcting any overflow.
"""

from ._backend import kernel_kind
from .core import (
    EPS_FEAS,
    CapacityProfile,
    ComplexPower,
    Demand,
    Instance,
    InstanceFormatError,
    InvalidInstanceError,
    ScheduleDecision,
    SystemBounds,
    ValidationReport,
    aggregate_load,
    feasibility_check,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    phase_spread,
    save_instance,
    validate_instance,
)
from .online import (
    ALPHA_DEFAULT,
    DELTA_DEFAULT,
    AlgorithmParams,
    OnlineResult,
    OnlineState,
    fractional_pass,
    rounding_pass,
    run_online,
    scaling_large,
    scaling_small,
)
from .oracle import (
    RatioEstimate,
    OracleResult,
    brute_force_opt,
    empirical_ratio,
    fcfs,
)
from .packing import (
    ClaimsReport,
    PackingColumn,
    PackingError,
    PackingState,
    check_claims,
    pd_process_column,
)
from .voltage import (
    BfmSolution,
    FeederTopology,
    VoltageCollapseError,
    VoltageLimits,
    bfm_sweep,
    to_cspv_instance,
    validate_voltage_solution,
    voltage_coefficient,
)
from .workload import GeneratorConfig, canonical_feeder, gen_capacity, gen_customers, gen_instance

__version__ = "0.1.0"

__all__ = [
    "ALPHA_DEFAULT",
    "AlgorithmParams",
    "BfmSolution",
    "CapacityProfile",
    "ClaimsReport",
    "ComplexPower",
    "DELTA_DEFAULT",
    "Demand",
    "EPS_FEAS",
    "FeederTopology",
    "GeneratorConfig",
    "Instance",
    "InstanceFormatError",
    "InvalidInstanceError",
    "OnlineResult",
    "OnlineState",
    "OracleResult",
    "PackingColumn",
    "PackingError",
    "PackingState",
    "RatioEstimate",
    "ScheduleDecision",
    "SystemBounds",
    "ValidationReport",
    "VoltageCollapseError",
    "VoltageLimits",
    "aggregate_load",
    "bfm_sweep",
    "brute_force_opt",
    "canonical_feeder",
    "check_claims",
    "empirical_ratio",
    "fcfs",
    "feasibility_check",
    "fractional_pass",
    "gen_capacity",
    "gen_customers",
    "gen_instance",
    "instance_from_dict",
    "instance_to_dict",
    "kernel_kind",
    "load_instance",
    "pd_process_column",
    "phase_spread",
    "rounding_pass",
    "run_online",
    "save_instance",
    "scaling_large",
    "scaling_small",
    "to_cspv_instance",
    "validate_instance",
    "validate_voltage_solution",
    "voltage_coefficient",
]
