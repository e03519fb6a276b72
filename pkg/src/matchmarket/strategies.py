"""Acceptance rules and the shared match utility.

Three homogeneous strategies are supported: accept everything, a
threshold rule ("reasonable") that demands utility close to an agent's
current worth, and the same-strip rule ("modified reasonable") built on
the partition from :mod:`matchmarket.geometry`.

All rules are pure functions of (own value, own age, partner value,
partner age, T); the scalar entry points wrap the vectorized kernels so
the simulator and the tests exercise a single implementation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import StripPartition

__all__ = [
    "StrategyKind",
    "AgentView",
    "match_utility",
    "accepts",
    "acceptance_mask",
    "mutual_acceptance_mask",
]


class StrategyKind(enum.Enum):
    ACCEPT_ALL = "accept-all"
    REASONABLE = "reasonable"
    MODIFIED_REASONABLE = "modified"


@dataclass(frozen=True)
class AgentView:
    """The (value, age) pair a strategy sees; remaining lifetime is T - age."""

    value: int
    age: int


def match_utility(self_view: AgentView, partner: AgentView, T: int) -> int:
    """Utility the first agent derives: partner value times the shorter remaining lifetime."""
    return partner.value * (T - max(self_view.age, partner.age))


def acceptance_mask(
    kind: StrategyKind,
    self_values: np.ndarray,
    self_ages: np.ndarray,
    other_values: np.ndarray,
    other_ages: np.ndarray,
    part: StripPartition | None,
    T: int,
) -> np.ndarray:
    """One-directional acceptance of ``other`` by ``self``, vectorized.

    The reasonable rule accepts when the match utility is at least
    value*(T-age)*(1 - 1/sqrt(T) - age/T), ties accepting.  For perfect
    squares the comparison is done in exact integer arithmetic so ties
    are not lost to float rounding; otherwise sqrt(T) is irrational and
    a float comparison is exact enough.
    """
    self_values = np.asarray(self_values, dtype=np.int64)
    self_ages = np.asarray(self_ages, dtype=np.int64)
    other_values = np.asarray(other_values, dtype=np.int64)
    other_ages = np.asarray(other_ages, dtype=np.int64)

    if kind is StrategyKind.ACCEPT_ALL:
        return np.ones(np.broadcast(self_values, other_values).shape, dtype=bool)

    if kind is StrategyKind.REASONABLE:
        utility = other_values * (T - np.maximum(self_ages, other_ages))
        remaining = T - self_ages
        s = math.isqrt(T)
        if s * s == T:
            # utility >= v*(T-a)*(1 - 1/s - a/T) scaled by T*s to stay integral
            lhs = utility * (T * s)
            rhs = self_values * remaining * (s * remaining - T)
            return lhs >= rhs
        threshold = self_values * remaining * (1.0 - 1.0 / math.sqrt(T) - self_ages / T)
        return utility >= threshold

    if kind is StrategyKind.MODIFIED_REASONABLE:
        if part is None:
            raise ValueError("modified reasonable strategy requires a strip partition")
        self_codes = part.strip_codes(self_values, self_ages)
        other_codes = part.strip_codes(other_values, other_ages)
        return self_codes == other_codes

    raise ValueError(f"unknown strategy kind: {kind!r}")


def mutual_acceptance_mask(
    kind: StrategyKind,
    man_values: np.ndarray,
    man_ages: np.ndarray,
    woman_values: np.ndarray,
    woman_ages: np.ndarray,
    part: StripPartition | None,
    T: int,
) -> np.ndarray:
    """A proposed pair matches only if both sides accept."""
    return acceptance_mask(kind, man_values, man_ages, woman_values, woman_ages, part, T) & acceptance_mask(
        kind, woman_values, woman_ages, man_values, man_ages, part, T
    )


def accepts(
    kind: StrategyKind,
    self_view: AgentView,
    partner: AgentView,
    part: StripPartition | None,
    T: int,
) -> bool:
    """Does ``self_view`` accept a proposed match with ``partner``?"""
    mask = acceptance_mask(
        kind,
        np.array([self_view.value]),
        np.array([self_view.age]),
        np.array([partner.value]),
        np.array([partner.age]),
        part,
        T,
    )
    return bool(mask[0])
