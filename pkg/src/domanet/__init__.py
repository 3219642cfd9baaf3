"""Uplink D-OMA network simulator and Tchebycheff monotonic-optimization solver."""

from .config import ConfigError, SystemConfig, desk_scale, paper_scale
from .scenario import Scenario, generate_scenario, sort_for_sic
from .rates import (
    Assignment,
    ConstraintReport,
    InterferenceTerms,
    Metrics,
    OverlapProfile,
    PowerAllocation,
    check_constraints,
    interference_terms,
    network_metrics,
    rate_table,
    ue_rate,
)
from .modes import MODES, NESTING, Mode, parse_mode
from .oracle import (GridCapError, GridSpec, InfeasibleScenarioError,
                     OracleResult, estimate_evaluations, exhaustive_best,
                     recompute_metrics)
from .scalarize import (DecisionSpace, ScalarizationConfig, Utopia,
                        dif_functions, lift_to_p4, scalarization_for,
                        tchebycheff_objective, utopia_points)
from .polyblock import (ContractViolation, DifProblem, SolveResult,
                        SolverOptions, solve)
from .pipeline import (Candidate, InfeasibleInstanceError, InstanceSolution,
                       SolveSettings, resolve_utopia, solve_instance,
                       sweep_modes, sweep_omegas)
from .bench import (ExperimentPlan, RunRecord, read_csv, render_plots,
                    run_experiment, write_csv)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "Candidate",
    "ConfigError",
    "ConstraintReport",
    "ContractViolation",
    "DecisionSpace",
    "DifProblem",
    "ExperimentPlan",
    "GridCapError",
    "GridSpec",
    "InfeasibleInstanceError",
    "InfeasibleScenarioError",
    "InstanceSolution",
    "InterferenceTerms",
    "MODES",
    "Metrics",
    "Mode",
    "NESTING",
    "OracleResult",
    "OverlapProfile",
    "PowerAllocation",
    "RunRecord",
    "ScalarizationConfig",
    "Scenario",
    "SolveResult",
    "SolveSettings",
    "SolverOptions",
    "SystemConfig",
    "Utopia",
    "check_constraints",
    "desk_scale",
    "dif_functions",
    "estimate_evaluations",
    "exhaustive_best",
    "generate_scenario",
    "interference_terms",
    "lift_to_p4",
    "network_metrics",
    "paper_scale",
    "parse_mode",
    "rate_table",
    "read_csv",
    "recompute_metrics",
    "render_plots",
    "resolve_utopia",
    "run_experiment",
    "scalarization_for",
    "solve",
    "solve_instance",
    "sort_for_sic",
    "sweep_modes",
    "sweep_omegas",
    "tchebycheff_objective",
    "utopia_points",
    "ue_rate",
    "write_csv",
]
