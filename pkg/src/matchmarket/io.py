"""Run orchestration and bit-stable CSV/JSON emission.

All artifacts are deterministic functions of (config, seed): CSV cells
use a fixed decimal format with '.' separators and LF line endings, and
JSON numbers are printed with 17 significant digits by a small local
serializer (the stdlib encoder's float formatting is version-dependent).
Cells with no defined value (e.g. average loss before the first
departure) are left empty rather than zero.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .config import Model, RunConfig
from .continuum import ContinuumResult, continuum_run
from .geometry import StripKind, StripPartition
from .market import run
from .metrics import CLAUSE_IDS, RunResult, constraints_satisfied

__all__ = [
    "TIMESERIES_HEADER",
    "emit_timeseries",
    "emit_summary",
    "emit_partition",
    "run_batch",
    "BatchResult",
    "run_sweep",
    "sweep_table_rows",
    "emit_sweep_table",
    "to_json",
]

TIMESERIES_HEADER = (
    "step,population,men,women,entrants,matches,aged_out,"
    "cum_loss,avg_loss_all,avg_loss_matched,diag_population"
)


def _cell(value) -> str:
    """One CSV cell: ints verbatim, floats at fixed 6 decimals, NaN/None empty."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    f = float(value)
    if math.isnan(f):
        return ""
    return f"{f:.6f}"


def _timeseries_rows(result: RunResult | ContinuumResult) -> Iterable[tuple]:
    if isinstance(result, RunResult):
        s = result.series
        for i in range(len(s)):
            yield (
                int(s.step[i]),
                int(s.population[i]),
                int(s.men[i]),
                int(s.women[i]),
                int(s.entrants[i]),
                int(s.matches[i]),
                int(s.aged_out[i]),
                int(s.cum_loss[i]),
                float(s.avg_loss_all[i]),
                float(s.avg_loss_matched[i]),
                int(s.diag_population[i]),
            )
        return
    # continuum: gender columns collapse to population/2, flows are masses
    cum_loss = np.cumsum(result.losses)
    cum_matched_loss = np.cumsum(result.losses_matched)
    cum_departed = np.cumsum(result.matched + result.aged_out)
    cum_matched = np.cumsum(result.matched)
    n = result.config.n
    for i in range(result.population.size):
        departed = cum_departed[i]
        matched = cum_matched[i]
        yield (
            i,
            float(result.population[i]),
            float(result.population[i] / 2.0),
            float(result.population[i] / 2.0),
            n,
            float(result.matched[i] / 2.0),
            float(result.aged_out[i]),
            float(cum_loss[i]),
            float(cum_loss[i] / departed) if departed > 0 else math.nan,
            float(cum_matched_loss[i] / matched) if matched > 0 else math.nan,
            float(result.diag_mass[i]),
        )


def emit_timeseries(result: RunResult | ContinuumResult, destination: Path | str | IO[str]) -> None:
    """Write the per-step CSV (one row per step, deterministic formatting)."""
    own = isinstance(destination, (str, Path))
    handle = open(destination, "w", newline="\n") if own else destination
    try:
        handle.write(TIMESERIES_HEADER + "\n")
        for row in _timeseries_rows(result):
            handle.write(",".join(_cell(v) for v in row) + "\n")
    finally:
        if own:
            handle.close()


# -- JSON with fixed float formatting ------------------------------------------


def _json_fragment(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        f = float(value)
        if math.isnan(f) or math.isinf(f):
            out.append("null")
        else:
            out.append(format(f, ".17g"))
    elif isinstance(value, str):
        out.append('"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"')
    elif isinstance(value, dict):
        out.append("{")
        for i, (k, v) in enumerate(value.items()):
            if i:
                out.append(",")
            _json_fragment(str(k), out)
            out.append(":")
            _json_fragment(v, out)
        out.append("}")
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(list(value)):
            if i:
                out.append(",")
            _json_fragment(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(value)!r}")


def to_json(value) -> str:
    """Deterministic JSON text: 17-significant-digit floats, no locale effects."""
    out: list[str] = []
    _json_fragment(value, out)
    return "".join(out)


# -- batches and sweeps ---------------------------------------------------------


@dataclass
class BatchResult:
    """All runs of one configuration (seeds seed, seed+1, ...)."""

    config: RunConfig
    results: list[RunResult]

    @property
    def seeds(self) -> list[int]:
        return [r.summary.seed for r in self.results]

    def mean(self, attr: str) -> float:
        values = [getattr(r.summary, attr) for r in self.results]
        values = [v for v in values if v is not None]
        return sum(values) / len(values) if values else math.nan

    def spread_pct(self, attr: str) -> float:
        """Half the min-max range as a percentage of the mean."""
        values = [getattr(r.summary, attr) for r in self.results if getattr(r.summary, attr) is not None]
        if not values:
            return math.nan
        mean = sum(values) / len(values)
        if mean == 0:
            return math.nan
        return (max(values) - min(values)) / 2.0 / mean * 100.0


def run_batch(config: RunConfig) -> BatchResult:
    """Execute config.runs independent runs with seeds config.seed + i."""
    results = [run(config.with_seed(config.seed + i)) for i in range(config.runs)]
    return BatchResult(config=config, results=results)


def _config_echo(config: RunConfig) -> dict:
    return {
        "n": config.n,
        "T": config.T,
        "steps": config.steps,
        "strategy": config.strategy.value,
        "seed": config.seed,
        "runs": config.runs,
        "model": config.model.value,
    }


def _clause_aggregate(results: Sequence[RunResult]) -> dict:
    agg = {}
    for cid in CLAUSE_IDS:
        holds = [r.summary.clause_hold_fractions[cid] for r in results]
        worsts = [r.summary.clause_worst_margins[cid] for r in results]
        pick = min if cid == "population_floor" else max
        agg[cid] = {
            "hold_fraction_mean": float(np.mean(holds)),
            "worst_margin": float(pick(worsts)),
        }
    return agg


def emit_summary(batch: BatchResult, destination: Path | str | IO[str]) -> dict:
    """Per-run rows plus mean and half-range spread, Appendix-table style."""
    doc = {
        "config": _config_echo(batch.config),
        "seeds": batch.seeds,
        "runs": [r.summary.to_dict() for r in batch.results],
        "mean": {
            "avg_population": batch.mean("avg_population"),
            "avg_loss_all": batch.mean("avg_loss_all"),
            "avg_loss_matched": batch.mean("avg_loss_matched"),
            "loss_over_T": batch.mean("loss_over_T"),
            "loss_matched_over_T": batch.mean("loss_matched_over_T"),
            "normalized_population": batch.mean("normalized_population"),
            "normalized_loss": batch.mean("normalized_loss"),
        },
        "spread_pct": {
            "avg_population": batch.spread_pct("avg_population"),
            "loss_over_T": batch.spread_pct("loss_over_T"),
        },
        "bound_clauses": _clause_aggregate(batch.results),
        "constraints": _constraint_echo(batch.config),
    }
    _write_text(destination, to_json(doc) + "\n")
    return doc


def emit_continuum_summary(result: ContinuumResult, destination: Path | str | IO[str]) -> dict:
    doc = {
        "config": _config_echo(result.config),
        "summary": result.summary.to_dict(),
        "constraints": _constraint_echo(result.config),
    }
    _write_text(destination, to_json(doc) + "\n")
    return doc


def _constraint_echo(config: RunConfig) -> dict:
    report = constraints_satisfied(max(config.n, 1), config.T, 1.0)
    return {
        "c": report.c,
        "satisfied": report.satisfied,
        "c_ok": report.c_ok,
        "t_ok": report.t_ok,
        "n_ok": report.n_ok,
        "t_threshold": report.t_threshold,
        "n_threshold": report.n_threshold,
    }


def _write_text(destination: Path | str | IO[str], text: str) -> None:
    if isinstance(destination, (str, Path)):
        with open(destination, "w", newline="\n") as handle:
            handle.write(text)
    else:
        destination.write(text)


def run_sweep(base: RunConfig, n_values: Sequence[int], t_values: Sequence[int]) -> list[BatchResult]:
    """One batch per (n, T) cell; each batch reuses the base seed ladder."""
    batches = []
    for n in n_values:
        for T in t_values:
            cfg = RunConfig(
                n=n,
                T=T,
                steps=base.steps,
                strategy=base.strategy,
                seed=base.seed,
                runs=base.runs,
                model=base.model,
                out_dir=base.out_dir,
            )
            batches.append(run_batch(cfg))
    return batches


SWEEP_HEADER = (
    "n,T,runs,mean_population,population_spread_pct,mean_loss_over_T,"
    "loss_spread_pct,mean_loss_matched_over_T,normalized_population,normalized_loss"
)


def sweep_table_rows(batches: Sequence[BatchResult]) -> list[tuple]:
    rows = []
    for b in batches:
        rows.append(
            (
                b.config.n,
                b.config.T,
                b.config.runs,
                b.mean("avg_population"),
                b.spread_pct("avg_population"),
                b.mean("loss_over_T"),
                b.spread_pct("loss_over_T"),
                b.mean("loss_matched_over_T"),
                b.mean("normalized_population"),
                b.mean("normalized_loss"),
            )
        )
    return rows


def emit_sweep_table(batches: Sequence[BatchResult], destination: Path | str | IO[str]) -> None:
    lines = [SWEEP_HEADER]
    for row in sweep_table_rows(batches):
        lines.append(",".join(_cell(v) for v in row))
    _write_text(destination, "\n".join(lines) + "\n")


def emit_partition(part: StripPartition, destination: Path | str | IO[str]) -> None:
    """Dump strips as CSV: kind, index, diagonal bounds, height in steps."""
    lines = ["kind,index,d_low,d_high,height"]
    w = part.w
    for i in range(1, w + 1):
        d_low = part.T + (i - 1) * w
        d_high = 2 * part.T if i == w else part.T + i * w
        height = (d_high - d_low + 1) // 2  # steps to traverse the band
        lines.append(f"type1,{i},{d_low},{d_high},{height}")
    bounds = part.diag_boundaries
    for k, h in enumerate(part.type2_heights, start=1):
        lines.append(f"type2,{k},{bounds[k]},{bounds[k - 1]},{h}")
    _write_text(destination, "\n".join(lines) + "\n")


def default_out_dir() -> Path:
    env = os.environ.get("MATCHMARKET_OUT")
    return Path(env) if env else Path.cwd()
