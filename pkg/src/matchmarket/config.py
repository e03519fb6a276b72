"""Run configuration shared by the engine, the continuum solver, and the CLI."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

from .strategies import StrategyKind

__all__ = ["Model", "RunConfig", "DEFAULT_STEPS", "DEFAULT_RUNS"]

DEFAULT_STEPS = 2000
DEFAULT_RUNS = 10


class Model(enum.Enum):
    DISCRETE = "discrete"
    CONTINUUM = "continuum"


@dataclass(frozen=True)
class RunConfig:
    """One simulation request: n entrants per step, lifetime T, horizon, strategy, seed."""

    n: int
    T: int
    steps: int = DEFAULT_STEPS
    strategy: StrategyKind = StrategyKind.MODIFIED_REASONABLE
    seed: int = 0
    runs: int = DEFAULT_RUNS
    model: Model = Model.DISCRETE
    out_dir: Path | None = None
    write_timeseries: bool = True
    write_summary: bool = True

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"n must be nonnegative, got {self.n}")
        if self.T < 4:
            raise ValueError(f"T must be at least 4, got {self.T}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        if self.runs < 1:
            raise ValueError(f"runs must be at least 1, got {self.runs}")

    def with_seed(self, seed: int) -> "RunConfig":
        return RunConfig(
            n=self.n,
            T=self.T,
            steps=self.steps,
            strategy=self.strategy,
            seed=seed,
            runs=self.runs,
            model=self.model,
            out_dir=self.out_dir,
            write_timeseries=self.write_timeseries,
            write_summary=self.write_summary,
        )
