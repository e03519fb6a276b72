"""The discrete stochastic market engine.

Each step, in order: n new agents enter (fair-coin gender, value uniform
on {T, ..., 2T-1}); the post-entry population is observed (censuses are
taken here); men and women are paired uniformly at random by shuffling
both sides and zipping the first min(men, women) positions; a proposed
pair matches only when both sides accept; survivors age by one step and
anyone reaching age T is expelled with loss value*T.

All randomness flows through one seeded ``numpy.random.Generator``
backed by PCG64, with a fixed draw order per step (entrant genders,
entrant values, man shuffle, woman shuffle), so a (config, seed) pair
reproduces a run bit for bit.  Pools are stored columnwise for speed;
``Agent`` objects are materialized only on demand.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .config import RunConfig
from .geometry import StripPartition, build_partition
from .metrics import MetricsAccumulator, RunResult, diag_band_count
from .strategies import StrategyKind, mutual_acceptance_mask

__all__ = [
    "Gender",
    "Agent",
    "AgentPool",
    "MarketState",
    "MatchRecord",
    "StepReport",
    "spawn_entrants",
    "random_pairing",
    "step",
    "run",
]


class Gender(enum.Enum):
    MAN = 0
    WOMAN = 1


@dataclass(slots=True, frozen=True)
class Agent:
    """One market participant; value is fixed at entry, age = current step - entry_step."""

    id: int
    gender: Gender
    value: int
    entry_step: int
    age: int


@dataclass(slots=True, frozen=True)
class MatchRecord:
    man_value: int
    woman_value: int
    man_age: int
    woman_age: int
    step: int
    man_utility: int
    woman_utility: int
    man_loss: int
    woman_loss: int


class AgentPool:
    """Columnar storage for one gender's side of the pool (id-ordered)."""

    def __init__(self) -> None:
        self.ids = np.empty(0, dtype=np.int64)
        self.values = np.empty(0, dtype=np.int64)
        self.ages = np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return self.ids.size

    def append(self, ids: np.ndarray, values: np.ndarray, ages: np.ndarray) -> None:
        self.ids = np.concatenate([self.ids, ids])
        self.values = np.concatenate([self.values, values])
        self.ages = np.concatenate([self.ages, ages])

    def keep(self, mask: np.ndarray) -> None:
        self.ids = self.ids[mask]
        self.values = self.values[mask]
        self.ages = self.ages[mask]

    def to_agents(self, gender: Gender, current_step: int) -> list[Agent]:
        return [
            Agent(id=int(i), gender=gender, value=int(v), entry_step=current_step - int(a), age=int(a))
            for i, v, a in zip(self.ids.tolist(), self.values.tolist(), self.ages.tolist())
        ]


@dataclass
class MarketState:
    """Pool of unmatched agents plus step counter and RNG state."""

    T: int
    step: int = 0
    men: AgentPool = field(default_factory=AgentPool)
    women: AgentPool = field(default_factory=AgentPool)
    rng: np.random.Generator = field(default_factory=lambda: np.random.Generator(np.random.PCG64(0)))
    next_id: int = 0

    @classmethod
    def fresh(cls, T: int, seed: int) -> "MarketState":
        return cls(T=T, rng=np.random.Generator(np.random.PCG64(seed)))

    @property
    def population(self) -> int:
        return len(self.men) + len(self.women)


@dataclass
class StepReport:
    """Everything observable about one step; record lists materialize lazily."""

    step: int
    T: int
    entrants: int
    population_after_entry: int
    men_after_entry: int
    women_after_entry: int
    proposed_pairs: int
    diag_population: int
    census_men: np.ndarray
    census_women: np.ndarray
    match_man_values: np.ndarray
    match_man_ages: np.ndarray
    match_woman_values: np.ndarray
    match_woman_ages: np.ndarray
    match_man_utilities: np.ndarray
    match_woman_utilities: np.ndarray
    match_man_losses: np.ndarray
    match_woman_losses: np.ndarray
    aged_out_values: np.ndarray

    @property
    def match_count(self) -> int:
        return self.match_man_values.size

    @property
    def aged_out_count(self) -> int:
        return self.aged_out_values.size

    @cached_property
    def matches(self) -> list[MatchRecord]:
        return [
            MatchRecord(
                man_value=mv, woman_value=wv, man_age=ma, woman_age=wa,
                step=self.step, man_utility=mu, woman_utility=wu,
                man_loss=ml, woman_loss=wl,
            )
            for mv, wv, ma, wa, mu, wu, ml, wl in zip(
                self.match_man_values.tolist(),
                self.match_woman_values.tolist(),
                self.match_man_ages.tolist(),
                self.match_woman_ages.tolist(),
                self.match_man_utilities.tolist(),
                self.match_woman_utilities.tolist(),
                self.match_man_losses.tolist(),
                self.match_woman_losses.tolist(),
            )
        ]

    @cached_property
    def aged_out(self) -> list["DepartureRecord"]:
        from .metrics import Cause, DepartureRecord

        return [
            DepartureRecord(
                value=v,
                age_at_departure=self.T,
                utility=0,
                loss=v * self.T,
                cause=Cause.AGED_OUT,
            )
            for v in self.aged_out_values.tolist()
        ]

    def departures(self) -> list["DepartureRecord"]:
        """All departures this step: both sides of every match, then the aged out."""
        from .metrics import Cause, DepartureRecord

        out = []
        for rec in self.matches:
            out.append(
                DepartureRecord(
                    value=rec.man_value,
                    age_at_departure=rec.man_age,
                    utility=rec.man_utility,
                    loss=rec.man_loss,
                    cause=Cause.MATCHED,
                )
            )
            out.append(
                DepartureRecord(
                    value=rec.woman_value,
                    age_at_departure=rec.woman_age,
                    utility=rec.woman_utility,
                    loss=rec.woman_loss,
                    cause=Cause.MATCHED,
                )
            )
        out.extend(self.aged_out)
        return out


def _draw_entrants(n: int, T: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Canonical entrant draws: genders first, then values, each one batch."""
    genders = rng.integers(0, 2, size=n)
    values = rng.integers(T, 2 * T, size=n)
    return genders, values


def spawn_entrants(
    n: int, T: int, step: int, rng: np.random.Generator, start_id: int = 0
) -> list[Agent]:
    """Draw n fresh agents (age 0) using the engine's exact draw order."""
    if n < 0:
        raise ValueError("entrant count must be nonnegative")
    genders, values = _draw_entrants(n, T, rng)
    return [
        Agent(
            id=start_id + k,
            gender=Gender(int(g)),
            value=int(v),
            entry_step=step,
            age=0,
        )
        for k, (g, v) in enumerate(zip(genders.tolist(), values.tolist()))
    ]


def _pairing_permutations(
    n_men: int, n_women: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle both sides; zipping the first min(men, women) positions yields a
    uniform injection of the smaller side into the larger."""
    return rng.permutation(n_men), rng.permutation(n_women)


def random_pairing(
    men: list[Agent], women: list[Agent], rng: np.random.Generator
) -> list[tuple[Agent, Agent]]:
    """Pair agents uniformly at random; exactly min(len(men), len(women)) pairs."""
    perm_m, perm_w = _pairing_permutations(len(men), len(women), rng)
    k = min(len(men), len(women))
    return [(men[perm_m[i]], women[perm_w[i]]) for i in range(k)]


def step(
    state: MarketState,
    kind: StrategyKind,
    part: StripPartition | None,
    n: int,
    T: int | None = None,
) -> tuple[MarketState, StepReport]:
    """Advance the market one step in place; returns (state, report).

    Order: enter, observe (census point), pair, match, age, expel.
    Entrants can match at age 0.  ``part`` is only required for the
    modified reasonable strategy.
    """
    if T is None:
        T = state.T
    if T != state.T:
        raise ValueError("step T must match the state's lifetime")
    if kind is StrategyKind.MODIFIED_REASONABLE and part is None:
        raise ValueError("modified reasonable strategy requires a strip partition")

    rng = state.rng
    now = state.step

    # 1. entry
    genders, values = _draw_entrants(n, T, rng)
    ids = np.arange(state.next_id, state.next_id + n, dtype=np.int64)
    state.next_id += n
    is_man = genders == Gender.MAN.value
    zeros = np.zeros(n, dtype=np.int64)
    state.men.append(ids[is_man], values[is_man], zeros[is_man])
    state.women.append(ids[~is_man], values[~is_man], zeros[~is_man])

    men, women = state.men, state.women
    n_men, n_women = len(men), len(women)

    # 2. observation point: population and censuses after entry, before matching
    population_after_entry = n_men + n_women
    if part is not None:
        census_men = part.census(men.values, men.ages)
        census_women = part.census(women.values, women.ages)
    else:
        census_men = np.zeros(0, dtype=np.int64)
        census_women = np.zeros(0, dtype=np.int64)
    diag_population = diag_band_count(men.values, men.ages, T) + diag_band_count(
        women.values, women.ages, T
    )

    # 3. uniformly random pairing
    perm_m, perm_w = _pairing_permutations(n_men, n_women, rng)
    k = min(n_men, n_women)
    pm, pw = perm_m[:k], perm_w[:k]

    # 4. mutual acceptance and removal of matched pairs
    mv, ma = men.values[pm], men.ages[pm]
    wv, wa = women.values[pw], women.ages[pw]
    matched = mutual_acceptance_mask(kind, mv, ma, wv, wa, part, T)

    mv, ma, wv, wa = mv[matched], ma[matched], wv[matched], wa[matched]
    shared_time = T - np.maximum(ma, wa)
    man_utility = wv * shared_time
    woman_utility = mv * shared_time
    man_loss = np.maximum(0, mv * T - man_utility)
    woman_loss = np.maximum(0, wv * T - woman_utility)

    keep_men = np.ones(n_men, dtype=bool)
    keep_men[pm[matched]] = False
    keep_women = np.ones(n_women, dtype=bool)
    keep_women[pw[matched]] = False
    men.keep(keep_men)
    women.keep(keep_women)

    # 5. aging and forced exit at age T
    men.ages += 1
    women.ages += 1
    expired_men = men.ages == T
    expired_women = women.ages == T
    aged_out_values = np.concatenate([men.values[expired_men], women.values[expired_women]])
    men.keep(~expired_men)
    women.keep(~expired_women)

    # 6. advance the clock
    state.step += 1

    report = StepReport(
        step=now,
        T=T,
        entrants=n,
        population_after_entry=population_after_entry,
        men_after_entry=n_men,
        women_after_entry=n_women,
        proposed_pairs=k,
        diag_population=diag_population,
        census_men=census_men,
        census_women=census_women,
        match_man_values=mv,
        match_man_ages=ma,
        match_woman_values=wv,
        match_woman_ages=wa,
        match_man_utilities=man_utility,
        match_woman_utilities=woman_utility,
        match_man_losses=man_loss,
        match_woman_losses=woman_loss,
        aged_out_values=aged_out_values,
    )
    return state, report


def run(config: RunConfig) -> RunResult:
    """Execute one seeded run from an empty pool, streaming reports into the metrics."""
    part = build_partition(config.T)
    state = MarketState.fresh(config.T, config.seed)
    acc = MetricsAccumulator(config, part)
    for _ in range(config.steps):
        _, report = step(state, config.strategy, part, config.n)
        acc.add_step(report)
    return acc.finish()
