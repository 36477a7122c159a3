"""Shapley-value payoff allocation for peer-to-peer energy sharing games.

A coalition's worth is the bill saving it unlocks by scheduling members'
batteries against a time-of-use tariff on one shared meter; payoffs are
Shapley values, computed exactly for small communities and by stratified
Monte Carlo with variance-proportional sample allocation for large ones.
"""

from .coalitions import (
    CapExceededError,
    ValueCache,
    coalition_members,
    coalition_of,
    coalition_size,
    enumerate_subsets,
    grand_coalition,
    sample_uniform_coalition,
)
from .game import (
    EnergyGame,
    Horizon,
    NO_STORAGE,
    Prosumer,
    ScheduleSolution,
    StorageSpec,
    TariffSchedule,
    build_lp,
    dispatch_cost,
    net_load,
    validate_schedule,
)
from .report import ErrorMetrics, PlayerRow, RunReport, estimation_error, read_report, write_report
from .scenario import (
    ConfigError,
    ScenarioConfig,
    StorageTemplate,
    SyntheticSource,
    config_from_dict,
    economy_tariff,
    generate_synthetic_scenario,
    load_config,
    load_sweep,
    with_rates,
)
from .shapley import (
    BudgetTooSmallError,
    SampleBudget,
    ShapleyResult,
    StratumOverflowError,
    StratumStats,
    allocate_stage2,
    estimate_coalitional_stratified_optimal,
    estimate_simple_random,
    estimate_stratified_uniform,
    exact_shapley,
    exact_shapley_permutations,
    sample_variance,
    shapley_size_weights,
    stratum_exact_mean,
    stratum_size,
)
from .simplex import LpProblem, LpSolution, check_feasible, solve
from .experiment import run_experiment, sweep_adoption

__version__ = "0.1.0"
