"""Discrete two-sided matching-market simulator and continuum solver."""

from .config import Model, RunConfig
from .geometry import (
    GridPoint,
    StripId,
    StripKind,
    StripPartition,
    build_partition,
    diag_coord,
    strip_of,
    worth,
)
from .strategies import AgentView, StrategyKind, accepts, match_utility

__all__ = [
    "Model",
    "RunConfig",
    "GridPoint",
    "StripId",
    "StripKind",
    "StripPartition",
    "build_partition",
    "diag_coord",
    "strip_of",
    "worth",
    "AgentView",
    "StrategyKind",
    "accepts",
    "match_utility",
]

__version__ = "0.1.0"
