"""Simulator and policy optimizer for multi-branch library holds systems."""

from .model import (
    ArrivalRates,
    Branch,
    CopyClass,
    Fulfillment,
    Mode,
    PatronClass,
    PolicySpec,
    Pool,
    Scenario,
    Title,
    arrival_rates,
    compatibility,
    load_policy,
    load_scenario,
    save_policy,
    save_scenario,
)
from .fulfillment import (
    GammaTable,
    TierAssignment,
    approx_value,
    compute_gammas,
    decide_near_optimal,
    decide_tiered,
    derive_tiers,
    uniform_rewards,
    usage_rewards,
)
from .objectives import ObjectivePoint, browser_objective, net_inflow, usage_objective
from .optimizer import (
    ParetoArchive,
    SearchConfig,
    hypervolume,
    optimize,
    reevaluate_tiered,
    tierify_policy,
)
from .oracles import SmallInstance, dp_value, lp_bound, policy_value, solve_dp
from .scenario import GeneratorConfig, default_config, generate, nypl_echo_config
from .simulator import (
    Baselines,
    SimConfig,
    SimMetrics,
    freeze_baselines,
    init_reserves,
    run,
)

__version__ = "0.1.0"
