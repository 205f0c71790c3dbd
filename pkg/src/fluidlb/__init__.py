"""Fluid-model load balancing across heterogeneous server pools.

Two dispatch policies over a shared fluid queueing model: a myopic rule that
soft-min-routes on current delay-to-service, and a proximal rule that runs
saddle-point dynamics on setup queues against shrunk capacity targets.  Both
come with equilibrium solvers, optimality certificates, and a fixed-step
simulator.
"""

from .model import (
    CostReport,
    FeasibilityReport,
    InfeasibleError,
    KktResiduals,
    Scenario,
    ScenarioError,
    SystemState,
    check_feasibility,
    compute_costs,
    proportional_feasible_point,
    scenario_with_capacities,
    scenario_with_epsilon,
    validate_scenario,
    zero_state,
)
from .softmin import softmin_gradient, softmin_rows, softmin_value
from .myopic import hard_myopic_choice, myopic_field, myopic_rates, waiting_time
from .equilibrium import (
    DualAscentError,
    EquilibriumReport,
    dual_gradient,
    dual_value,
    equilibrium_queues,
    primal_from_dual,
    reference_rates_small_eps,
    solve_dual,
    solve_equilibrium,
    verify_kkt,
)
from .proximal import (
    combined_field,
    dispatcher_qp,
    lyapunov_distance,
    proximal_rates,
    reduced_gradients,
    reduced_lagrangian,
    saddle_field,
    solve_saddle,
    verify_saddle_kkt,
)
from .simulate import (
    IntegrationError,
    MonotonicityReport,
    StabilityError,
    Trajectory,
    detect_equilibrium,
    equilibrium_warm_start,
    integrate,
    integrate_delayed,
    monitor_lyapunov,
    stability_guard_dt,
)
from .io import load_scenario, dump_scenario, read_trajectory_csv, write_trajectory_csv

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Scenario", "ScenarioError", "InfeasibleError", "FeasibilityReport",
    "CostReport", "KktResiduals", "SystemState", "EquilibriumReport",
    "Trajectory", "MonotonicityReport", "StabilityError", "IntegrationError",
    "DualAscentError",
    "validate_scenario", "check_feasibility", "proportional_feasible_point",
    "compute_costs", "scenario_with_capacities", "scenario_with_epsilon",
    "zero_state",
    "softmin_value", "softmin_gradient", "softmin_rows",
    "waiting_time", "myopic_rates", "myopic_field", "hard_myopic_choice",
    "dual_value", "dual_gradient", "solve_dual", "primal_from_dual",
    "equilibrium_queues", "verify_kkt", "solve_equilibrium",
    "reference_rates_small_eps",
    "dispatcher_qp", "proximal_rates", "reduced_lagrangian",
    "reduced_gradients", "saddle_field", "combined_field",
    "lyapunov_distance", "verify_saddle_kkt", "solve_saddle",
    "integrate", "integrate_delayed", "equilibrium_warm_start", "detect_equilibrium",
    "monitor_lyapunov", "stability_guard_dt",
    "load_scenario", "dump_scenario", "read_trajectory_csv",
    "write_trajectory_csv",
]
