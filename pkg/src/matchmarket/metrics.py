"""Loss accounting, censuses, and the quantitative bound diagnostics.

The accumulator consumes the engine's step reports and produces a
:class:`RunSummary` plus the per-step time series used by the CSV
writers.  Loss is tracked under two denominators, because the headline
"average loss" can be read as covering all departures or only the
matched ones: ``avg_loss_all`` divides the full shortfall (including
agents who aged out, losing their whole value*T) by every departure,
while ``avg_loss_matched`` restricts both numerator and denominator to
matched agents.

The inductive-hypothesis clauses (total population, per-strip
populations, bottom-strip population, per-strip imbalance, and the
population floor) are evaluated every step as diagnostics with margins;
at desk scale some of them are expected to fail, so none of them aborts
a run.  The only hard per-event assertion is the deterministic
per-match loss bound 4*T*age + 2*T*sqrt(T) for the modified strategy,
whose violations are counted and surfaced in the summary.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .config import RunConfig
from .geometry import StripId, StripKind, StripPartition, build_partition
from .strategies import StrategyKind

if TYPE_CHECKING:
    from .market import MarketState, MatchRecord, StepReport

__all__ = [
    "Cause",
    "DepartureRecord",
    "CensusRow",
    "BoundClause",
    "BoundReport",
    "ConstraintReport",
    "RunSummary",
    "TimeSeries",
    "RunResult",
    "MetricsAccumulator",
    "record_departure",
    "strip_census",
    "diagonal_census",
    "diag_band_count",
    "hypothesis_report",
    "match_loss_bound_check",
    "loss_bound_ok",
    "constraints_satisfied",
    "summarize",
    "CLAUSE_IDS",
]


class Cause(enum.Enum):
    MATCHED = "matched"
    AGED_OUT = "aged-out"


@dataclass(slots=True, frozen=True)
class DepartureRecord:
    """One agent leaving the pool; loss = max(0, value*T - utility)."""

    value: int
    age_at_departure: int
    utility: int
    loss: int
    cause: Cause


@dataclass(frozen=True)
class CensusRow:
    step: int
    strip: StripId
    men: int
    women: int

    @property
    def imbalance(self) -> int:
        return abs(self.men - self.women)


@dataclass(frozen=True)
class BoundClause:
    clause_id: str
    threshold: float
    observed: float
    direction: str  # "upper": observed <= threshold; "lower": observed >= threshold

    @property
    def margin(self) -> float:
        if self.threshold == 0:
            return math.nan
        return self.observed / self.threshold

    @property
    def satisfied(self) -> bool:
        if self.direction == "upper":
            return self.observed <= self.threshold
        return self.observed >= self.threshold


@dataclass(frozen=True)
class BoundReport:
    clauses: tuple[BoundClause, ...]

    def clause(self, clause_id: str) -> BoundClause:
        for c in self.clauses:
            if c.clause_id == clause_id:
                return c
        raise KeyError(clause_id)

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.clauses)


CLAUSE_IDS = (
    "total_population",
    "type1_population",
    "type2_population",
    "bottom_population",
    "strip_imbalance",
    "population_floor",
)


def _clause_records(
    men_counts: np.ndarray,
    women_counts: np.ndarray,
    population: int,
    n: int,
    T: int,
    part: StripPartition,
) -> tuple[BoundClause, ...]:
    """Evaluate all six bound clauses on one census snapshot.

    Per-strip clauses report the worst strip (largest ratio to its own
    threshold).  The bottommost Type 2 strip is exempt from the Type 2
    population clause and from the imbalance clause; it gets its own
    population clause instead.
    """
    w = part.w
    n_strips = part.strip_count
    sqrt_t = math.sqrt(T)
    totals = men_counts + women_counts

    clauses = [
        BoundClause("total_population", 1.5 * n * n_strips + n, float(population), "upper"),
        BoundClause("type1_population", 2.6 * n, float(totals[:w].max(initial=0)), "upper"),
    ]

    # Type 2 strips except the bottommost: threshold 7.5*n*sqrt(T)/height
    heights = part.type2_heights
    worst = None
    for k, h in enumerate(heights[:-1]):
        threshold = 7.5 * n * sqrt_t / h
        observed = float(totals[w + k])
        ratio = observed / threshold if threshold else math.inf
        if worst is None or ratio > worst[0]:
            worst = (ratio, threshold, observed)
    clauses.append(BoundClause("type2_population", worst[1], worst[2], "upper"))

    clauses.append(
        BoundClause("bottom_population", 60.0 * n / sqrt_t, float(totals[-1]), "upper")
    )

    imbalance = np.abs(men_counts[:-1] - women_counts[:-1])
    clauses.append(
        BoundClause(
            "strip_imbalance", n / (25.0 * sqrt_t), float(imbalance.max(initial=0)), "upper"
        )
    )

    clauses.append(
        BoundClause("population_floor", n * sqrt_t / 3.0, float(population), "lower")
    )
    return tuple(clauses)


def hypothesis_report(
    census: list[CensusRow],
    population: int,
    n: int,
    T: int,
    part: StripPartition,
) -> BoundReport:
    """Evaluate the five inductive-hypothesis clauses plus the population floor."""
    men_counts = np.zeros(part.strip_count, dtype=np.int64)
    women_counts = np.zeros(part.strip_count, dtype=np.int64)
    for row in census:
        code = part.code_of(row.strip)
        men_counts[code] += row.men
        women_counts[code] += row.women
    return BoundReport(_clause_records(men_counts, women_counts, population, n, T, part))


def strip_census(state: "MarketState", part: StripPartition) -> list[CensusRow]:
    """One row per strip for the state's current pool; rows sum to the population."""
    men_counts = part.census(state.men.values, state.men.ages)
    women_counts = part.census(state.women.values, state.women.ages)
    return [
        CensusRow(step=state.step, strip=sid, men=int(m), women=int(wm))
        for sid, m, wm in zip(part.strip_ids(), men_counts.tolist(), women_counts.tolist())
    ]


def diag_band_count(values: np.ndarray, ages: np.ndarray, T: int) -> int:
    """Agents whose diagonal coordinate sits in the width-1 band starting at value 3T/2."""
    lo = (3 * T) // 2
    d = np.asarray(values) - 2 * np.asarray(ages)
    return int(np.count_nonzero((d == lo) | (d == lo + 1)))


def diagonal_census(state: "MarketState", T: int) -> int:
    return diag_band_count(state.men.values, state.men.ages, T) + diag_band_count(
        state.women.values, state.women.ages, T
    )


def loss_bound_ok(losses: np.ndarray, ages: np.ndarray, T: int) -> np.ndarray:
    """Deterministic per-match loss bound for the modified strategy."""
    bound = 4.0 * T * np.asarray(ages) + 2.0 * T * math.sqrt(T)
    return np.asarray(losses) <= bound


def match_loss_bound_check(rec: "MatchRecord", T: int) -> tuple[bool, bool]:
    """(man ok, woman ok) for the 4*T*age + 2*T*sqrt(T) loss bound."""
    man_ok = bool(loss_bound_ok(np.array([rec.man_loss]), np.array([rec.man_age]), T)[0])
    woman_ok = bool(loss_bound_ok(np.array([rec.woman_loss]), np.array([rec.woman_age]), T)[0])
    return man_ok, woman_ok


@dataclass(frozen=True)
class ConstraintReport:
    """The analysis' admissibility constraints on (n, T, c), with evaluated right-hand sides."""

    n: int
    T: int
    c: float
    c_ok: bool
    t_ok: bool
    n_ok: bool
    t_threshold: float
    n_threshold: float

    @property
    def satisfied(self) -> bool:
        return self.c_ok and self.t_ok and self.n_ok


def constraints_satisfied(n: int, T: int, c: float = 1.0) -> ConstraintReport:
    """Evaluate c >= 1, T >= 676, and the cubic-in-T lower bound on n."""
    if n < 1 or T < 1:
        raise ValueError("n and T must be positive")
    e12 = math.exp(12.0)
    coeff = (3654.0 + 2436.0 * e12 + 546.0 * (e12 + 1.0) * c) ** 2 * (3.0 * c + 4.0)
    n_threshold = coeff * T**3 * math.log2(n) ** 2 * math.log(n)
    return ConstraintReport(
        n=n,
        T=T,
        c=c,
        c_ok=c >= 1.0,
        t_ok=T >= 676,
        n_ok=n >= n_threshold,
        t_threshold=676.0,
        n_threshold=n_threshold,
    )


@dataclass
class TimeSeries:
    """Per-step scalar columns of one run, in step order."""

    step: np.ndarray
    population: np.ndarray
    men: np.ndarray
    women: np.ndarray
    entrants: np.ndarray
    matches: np.ndarray
    aged_out: np.ndarray
    cum_loss: np.ndarray
    avg_loss_all: np.ndarray  # nan until the first departure
    avg_loss_matched: np.ndarray
    diag_population: np.ndarray

    def __len__(self) -> int:
        return self.step.size


@dataclass(frozen=True)
class RunSummary:
    """Aggregated population/loss/bound statistics for one run."""

    n: int
    T: int
    steps: int
    strategy: str
    seed: int
    avg_population: float
    entrants_total: int
    departures_matched: int
    departures_aged_out: int
    total_loss: int
    matched_loss: int
    avg_loss_all: float | None
    avg_loss_matched: float | None
    loss_over_T: float | None
    loss_matched_over_T: float | None
    normalized_population: float | None
    normalized_loss: float | None
    final_population: int
    max_match_loss: int
    match_loss_bound_violations: int
    clause_hold_fractions: dict[str, float]
    clause_violation_counts: dict[str, int]
    clause_worst_margins: dict[str, float]

    @property
    def departures_total(self) -> int:
        return self.departures_matched + self.departures_aged_out

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "T": self.T,
            "steps": self.steps,
            "strategy": self.strategy,
            "seed": self.seed,
            "avg_population": self.avg_population,
            "entrants_total": self.entrants_total,
            "departures_matched": self.departures_matched,
            "departures_aged_out": self.departures_aged_out,
            "total_loss": self.total_loss,
            "matched_loss": self.matched_loss,
            "avg_loss_all": self.avg_loss_all,
            "avg_loss_matched": self.avg_loss_matched,
            "loss_over_T": self.loss_over_T,
            "loss_matched_over_T": self.loss_matched_over_T,
            "normalized_population": self.normalized_population,
            "normalized_loss": self.normalized_loss,
            "final_population": self.final_population,
            "max_match_loss": self.max_match_loss,
            "match_loss_bound_violations": self.match_loss_bound_violations,
            "clause_hold_fractions": self.clause_hold_fractions,
            "clause_violation_counts": self.clause_violation_counts,
            "clause_worst_margins": self.clause_worst_margins,
        }


@dataclass
class RunResult:
    """Full output of one discrete run: summary, time series, and census stack."""

    config: RunConfig
    summary: RunSummary
    series: TimeSeries
    census_men: np.ndarray  # (steps, strips)
    census_women: np.ndarray
    clause_flags: np.ndarray  # (steps, len(CLAUSE_IDS)) bool
    clause_margins: np.ndarray


class MetricsAccumulator:
    """Streams step reports into totals, series columns, and clause diagnostics.

    The bulk path reads the reports' columnar arrays; the record-level
    path (:meth:`record_departure`) updates the same totals one record
    at a time, and the two are equivalent by construction (covered by a
    test, not by parallel bookkeeping).
    """

    def __init__(self, config: RunConfig, part: StripPartition | None = None):
        self.config = config
        self.part = part if part is not None else build_partition(config.T)
        self.total_loss = 0
        self.matched_loss = 0
        self.departures_matched = 0
        self.departures_aged_out = 0
        self.entrants_total = 0
        self.max_match_loss = 0
        self.match_loss_bound_violations = 0
        self._population_sum = 0
        self._steps_seen = 0
        self._final_population = 0
        self._series: dict[str, list] = {
            key: []
            for key in (
                "step",
                "population",
                "men",
                "women",
                "entrants",
                "matches",
                "aged_out",
                "cum_loss",
                "avg_loss_all",
                "avg_loss_matched",
                "diag_population",
            )
        }
        self._census_men: list[np.ndarray] = []
        self._census_women: list[np.ndarray] = []
        self._clause_flags: list[list[bool]] = []
        self._clause_margins: list[list[float]] = []

    # -- record-level surface -------------------------------------------------

    def record_departure(self, rec: DepartureRecord) -> "MetricsAccumulator":
        self.total_loss += rec.loss
        if rec.cause is Cause.MATCHED:
            self.matched_loss += rec.loss
            self.departures_matched += 1
        else:
            self.departures_aged_out += 1
        return self

    # -- bulk path ------------------------------------------------------------

    def add_step(self, report: "StepReport") -> None:
        T = self.config.T
        match_losses_sum = int(report.match_man_losses.sum()) + int(report.match_woman_losses.sum())
        aged_losses_sum = int(report.aged_out_values.sum()) * T

        self.total_loss += match_losses_sum + aged_losses_sum
        self.matched_loss += match_losses_sum
        self.departures_matched += 2 * report.match_count
        self.departures_aged_out += report.aged_out_count
        self.entrants_total += report.entrants
        self._population_sum += report.population_after_entry
        self._steps_seen += 1
        self._final_population = (
            report.population_after_entry
            - 2 * report.match_count
            - report.aged_out_count
        )

        if report.match_count:
            step_max = max(
                int(report.match_man_losses.max()), int(report.match_woman_losses.max())
            )
            self.max_match_loss = max(self.max_match_loss, step_max)
        if self.config.strategy is StrategyKind.MODIFIED_REASONABLE and report.match_count:
            ok_men = loss_bound_ok(report.match_man_losses, report.match_man_ages, T)
            ok_women = loss_bound_ok(report.match_woman_losses, report.match_woman_ages, T)
            self.match_loss_bound_violations += int((~ok_men).sum()) + int((~ok_women).sum())

        departures_total = self.departures_matched + self.departures_aged_out
        s = self._series
        s["step"].append(report.step)
        s["population"].append(report.population_after_entry)
        s["men"].append(report.men_after_entry)
        s["women"].append(report.women_after_entry)
        s["entrants"].append(report.entrants)
        s["matches"].append(report.match_count)
        s["aged_out"].append(report.aged_out_count)
        s["cum_loss"].append(self.total_loss)
        s["avg_loss_all"].append(
            self.total_loss / departures_total if departures_total else math.nan
        )
        s["avg_loss_matched"].append(
            self.matched_loss / self.departures_matched if self.departures_matched else math.nan
        )
        s["diag_population"].append(report.diag_population)

        self._census_men.append(report.census_men)
        self._census_women.append(report.census_women)
        clauses = _clause_records(
            report.census_men,
            report.census_women,
            report.population_after_entry,
            self.config.n,
            T,
            self.part,
        )
        self._clause_flags.append([c.satisfied for c in clauses])
        self._clause_margins.append([c.margin for c in clauses])

    # -- output ---------------------------------------------------------------

    def summary(self) -> RunSummary:
        cfg = self.config
        departures_total = self.departures_matched + self.departures_aged_out
        avg_loss_all = self.total_loss / departures_total if departures_total else None
        avg_loss_matched = (
            self.matched_loss / self.departures_matched if self.departures_matched else None
        )
        sqrt_t = math.sqrt(cfg.T)
        avg_population = self._population_sum / self._steps_seen if self._steps_seen else 0.0

        flags = np.array(self._clause_flags, dtype=bool).reshape(-1, len(CLAUSE_IDS))
        margins = np.array(self._clause_margins, dtype=float).reshape(-1, len(CLAUSE_IDS))
        eligible = np.array(self._series["step"], dtype=np.int64) >= math.isqrt(cfg.T)
        hold: dict[str, float] = {}
        violations: dict[str, int] = {}
        worst: dict[str, float] = {}
        for j, cid in enumerate(CLAUSE_IDS):
            col_flags = flags[eligible, j]
            col_margins = margins[eligible, j]
            hold[cid] = float(col_flags.mean()) if col_flags.size else math.nan
            violations[cid] = int((~col_flags).sum())
            if col_margins.size:
                worst[cid] = float(
                    col_margins.min() if cid == "population_floor" else col_margins.max()
                )
            else:
                worst[cid] = math.nan

        return RunSummary(
            n=cfg.n,
            T=cfg.T,
            steps=self._steps_seen,
            strategy=cfg.strategy.value,
            seed=cfg.seed,
            avg_population=avg_population,
            entrants_total=self.entrants_total,
            departures_matched=self.departures_matched,
            departures_aged_out=self.departures_aged_out,
            total_loss=self.total_loss,
            matched_loss=self.matched_loss,
            avg_loss_all=avg_loss_all,
            avg_loss_matched=avg_loss_matched,
            loss_over_T=avg_loss_all / cfg.T if avg_loss_all is not None else None,
            loss_matched_over_T=(
                avg_loss_matched / cfg.T if avg_loss_matched is not None else None
            ),
            normalized_population=(
                avg_population / (cfg.n * sqrt_t) if cfg.n else None
            ),
            normalized_loss=(
                avg_loss_all / (cfg.T * sqrt_t) if avg_loss_all is not None else None
            ),
            final_population=self._final_population,
            max_match_loss=self.max_match_loss,
            match_loss_bound_violations=self.match_loss_bound_violations,
            clause_hold_fractions=hold,
            clause_violation_counts=violations,
            clause_worst_margins=worst,
        )

    def series(self) -> TimeSeries:
        s = self._series
        return TimeSeries(
            step=np.array(s["step"], dtype=np.int64),
            population=np.array(s["population"], dtype=np.int64),
            men=np.array(s["men"], dtype=np.int64),
            women=np.array(s["women"], dtype=np.int64),
            entrants=np.array(s["entrants"], dtype=np.int64),
            matches=np.array(s["matches"], dtype=np.int64),
            aged_out=np.array(s["aged_out"], dtype=np.int64),
            cum_loss=np.array(s["cum_loss"], dtype=np.int64),
            avg_loss_all=np.array(s["avg_loss_all"], dtype=float),
            avg_loss_matched=np.array(s["avg_loss_matched"], dtype=float),
            diag_population=np.array(s["diag_population"], dtype=np.int64),
        )

    def finish(self) -> RunResult:
        n_strips = self.part.strip_count
        census_men = (
            np.vstack(self._census_men) if self._census_men else np.zeros((0, n_strips), dtype=np.int64)
        )
        census_women = (
            np.vstack(self._census_women)
            if self._census_women
            else np.zeros((0, n_strips), dtype=np.int64)
        )
        return RunResult(
            config=self.config,
            summary=self.summary(),
            series=self.series(),
            census_men=census_men,
            census_women=census_women,
            clause_flags=np.array(self._clause_flags, dtype=bool).reshape(-1, len(CLAUSE_IDS)),
            clause_margins=np.array(self._clause_margins, dtype=float).reshape(-1, len(CLAUSE_IDS)),
        )


def record_departure(acc: MetricsAccumulator, rec: DepartureRecord) -> MetricsAccumulator:
    """Record one departure under both loss denominators."""
    return acc.record_departure(rec)


def summarize(reports: Iterable["StepReport"], config: RunConfig) -> RunSummary:
    """Aggregate a stream of step reports into a RunSummary."""
    acc = MetricsAccumulator(config)
    for report in reports:
        acc.add_step(report)
    return acc.summary()
