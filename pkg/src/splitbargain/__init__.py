"""Cut-layer selection for split learning as a Kalai-Smorodinsky bargaining game."""

__version__ = "0.1.0"

from .bargaining import (
    BargainingOutcome,
    BargainingProblem,
    brute_force_ksbs,
    cut_layer_from_alpha,
    feasibility_test,
    make_problem,
    solve_ksbs,
)
from .scenario import Scenario, ScenarioConfig, generate_scenario, load_scenario
from .sweep import sweep_utilities
from .utility import ideal_point, server_utility, device_utility
from .wireless import expected_upload_times

__all__ = [
    "BargainingOutcome",
    "BargainingProblem",
    "Scenario",
    "ScenarioConfig",
    "brute_force_ksbs",
    "cut_layer_from_alpha",
    "device_utility",
    "expected_upload_times",
    "feasibility_test",
    "generate_scenario",
    "ideal_point",
    "load_scenario",
    "make_problem",
    "server_utility",
    "solve_ksbs",
    "sweep_utilities",
]
