"""Cooperative OFDMA spectrum-sharing resource allocation.

Joint transmission-mode selection, relay/secondary-user selection,
subcarrier assignment, power control, and time-slot allocation for a
secondary network that earns spectrum access by relaying primary
traffic.  The solver maximizes the weighted secondary sum-rate subject
to per-node power budgets and primary rate requirements via Lagrange
dual decomposition with an ellipsoid outer loop, then recovers a
feasible primal allocation.
"""

from .baselines import (FixedModeAssignment, assign_ftm_modes, ftm_mask,
                        noncoop_mask, solve_ftm, solve_noncoop,
                        solve_pipeline, solve_proposed)
from .channel import NodeLayout, TapProfile, generate_instance, place_nodes
from .dual import (DualEvaluation, DualResult, SolverOptions, evaluate_dual,
                   full_mask, num_candidate_rows, solve_dual)
from .harness import (ExperimentConfig, emit_plot_data, load_config,
                      peak_power_from_snr, run_experiment)
from .model import (Allocation, DualState, FeasibilityReport, Mode,
                    NetworkInstance, ScenarioConfig, SolverReport,
                    SubcarrierCandidate, feasibility_check)
from .persub import (ModeInputs, TwoWayOptions, solve_direct_pu,
                     solve_direct_su, solve_oneway_df, solve_twoway,
                     solve_twoway_bc, solve_twoway_mac)
from .primal import recover_primal, repair_feasibility
from .oracle import (GridSpec, OracleResult, oracle_small_instance,
                     oracle_subproblem, oracle_time_sweep)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "DualEvaluation", "DualResult", "DualState",
    "ExperimentConfig", "FeasibilityReport", "FixedModeAssignment",
    "GridSpec", "Mode", "ModeInputs", "NetworkInstance", "NodeLayout",
    "OracleResult", "ScenarioConfig", "SolverOptions", "SolverReport",
    "SubcarrierCandidate", "TapProfile", "TwoWayOptions",
    "assign_ftm_modes", "emit_plot_data", "evaluate_dual",
    "feasibility_check", "ftm_mask", "full_mask", "generate_instance",
    "load_config", "noncoop_mask", "num_candidate_rows",
    "oracle_small_instance", "oracle_subproblem", "oracle_time_sweep",
    "peak_power_from_snr", "place_nodes", "recover_primal",
    "repair_feasibility", "run_experiment", "solve_direct_pu",
    "solve_direct_su", "solve_dual", "solve_ftm", "solve_noncoop",
    "solve_oneway_df", "solve_pipeline", "solve_proposed", "solve_twoway",
    "solve_twoway_bc", "solve_twoway_mac",
]
