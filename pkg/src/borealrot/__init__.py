"""Diameter-class stand growth with rotation, thinning and fertilization economics."""
from .errors import BorealRotError, InvariantError, PreconditionError, SchemaError
from .growth import (SPECIES, GrowthParams, SiteDescriptor, StandState, advance_step,
                     apply_fertilization, effective_site_index, stand_metrics)
from .economics import (CycleExpectation, EconomicConfig, Ledger, build_ledger,
                        cycle_expectation, expectation_curve, expected_capitalization,
                        expected_profit_rate, expected_return_rate, expected_volume,
                        harvest_revenue, stand_value, stumpage_value)
from .schedule import (Schedule, ThinningSpec, Trajectory, apply_thinning,
                       simulate_schedule, simulate_trajectory)
from .optimizer import OptimizationConfig, SearchResult, greedy_thinning_search, optimal_rotation
from .scenarios import (ScenarioKind, ScenarioResult, extension_only_rate,
                        rotation_extension_expense, run_scenario, stock_expense_rate)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BorealRotError", "InvariantError", "PreconditionError", "SchemaError",
    "SPECIES", "GrowthParams", "SiteDescriptor", "StandState", "advance_step",
    "apply_fertilization", "effective_site_index", "stand_metrics",
    "CycleExpectation", "EconomicConfig", "Ledger", "build_ledger", "cycle_expectation",
    "expectation_curve", "expected_capitalization", "expected_profit_rate",
    "expected_return_rate", "expected_volume", "harvest_revenue", "stand_value",
    "stumpage_value", "Schedule", "ThinningSpec", "Trajectory", "apply_thinning",
    "simulate_schedule", "simulate_trajectory", "OptimizationConfig", "SearchResult",
    "greedy_thinning_search", "optimal_rotation", "ScenarioKind", "ScenarioResult",
    "extension_only_rate", "rotation_extension_expense", "run_scenario",
    "stock_expense_rate", "BACKEND",
]
