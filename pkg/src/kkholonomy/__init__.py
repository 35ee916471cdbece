"""Kaluza-Klein circle bundles, recurrent light-like fields and numerical holonomy.

Tensor fields are evaluated in charts with truncated Taylor jets, so every
identity is checked with exact derivatives up to floating-point roundoff.
"""
from .catalog import Scenario, assemble_double_bundle, catalog, get_scenario, s2_transition_check, scenario_names
from .circle_bundle import KKMetric, integrality_check
from .config import RunConfig
from .recurrent import PreconditionError, RecurrentBundle, build_recurrent_bundle
from .report import run

__version__ = "0.1.0"

__all__ = [
    "KKMetric",
    "PreconditionError",
    "RecurrentBundle",
    "RunConfig",
    "Scenario",
    "assemble_double_bundle",
    "build_recurrent_bundle",
    "catalog",
    "get_scenario",
    "integrality_check",
    "run",
    "s2_transition_check",
    "scenario_names",
]
