"""Anytime coalition structure generation."""

from .coalition import CoalitionStructure, bottom, parse_structure, format_structure, top
from .engine import RunResult, SearchAgent, SolverConfig, run
from .oracle import optimal_dp, optimal_enumerate
from .values import (
    DistributionSpec,
    LazyValueFunction,
    TableValueFunction,
    load_table,
    make_distribution,
    random_table,
    structure_value,
)

__all__ = [
    "CoalitionStructure",
    "bottom",
    "top",
    "parse_structure",
    "format_structure",
    "SolverConfig",
    "SearchAgent",
    "RunResult",
    "run",
    "optimal_dp",
    "optimal_enumerate",
    "DistributionSpec",
    "LazyValueFunction",
    "TableValueFunction",
    "load_table",
    "make_distribution",
    "random_table",
    "structure_value",
]

__version__ = "0.1.0"
