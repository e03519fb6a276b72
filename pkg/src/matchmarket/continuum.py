"""Deterministic mean-field analogue of the discrete market.

Both genders share one density grid over the T x T box (per-gender
cell masses; the dynamics are gender-symmetric, so the two sides stay
identical and the reported population is twice the per-gender total).
Each step: mass n/(2T) enters at every (value, age 0) cell; every cell
matches away the fraction A(x)/M of its mass, where A(x) is the mass of
cells mutually acceptable to x and M the per-gender total (the
deterministic limit of the one-shot uniform pairing); everything ages
one step, and mass reaching the lifetime limit exits with loss value*T
per unit.

The mutual-acceptance relation depends only on (strategy, T), so it is
precomputed once per run:

* accept-everything needs no structure at all: A(x) = M, every cell
  empties each step, and only entry-age cells ever hold mass, so pair
  losses are computed on that tiny active set directly;
* the same-strip strategy uses per-strip mass sums for A(x) and a
  precomputed per-strip loss kernel (one dense block per strip);
* the threshold strategy has no partition structure, so it gets a full
  mutual-acceptance matrix plus a loss-weighted copy in float32; per
  step both reduce to matrix-vector products.

The dense route costs O(T^4) memory; a guard refuses lifetimes whose
kernels would not fit rather than thrash (T=100 fits comfortably).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .geometry import StripPartition, build_partition
from .metrics import diag_band_count
from .strategies import StrategyKind, acceptance_mask

__all__ = [
    "DensityGrid",
    "FlowReport",
    "ContinuumSummary",
    "ContinuumResult",
    "continuum_init",
    "continuum_step",
    "continuum_run",
    "KernelMemoryError",
]

KERNEL_MEMORY_CAP_BYTES = 3 * 1024**3
CONVERGENCE_TOL = 1e-9


class KernelMemoryError(MemoryError):
    """Raised when a precomputed acceptance kernel would exceed the memory cap."""


@dataclass
class DensityGrid:
    """Per-gender mass per (value, age) cell; population = 2 * total mass."""

    T: int
    mass: np.ndarray  # shape (T, T): [value - T, age], float64
    step: int = 0

    @property
    def per_gender_total(self) -> float:
        return float(self.mass.sum())

    @property
    def population(self) -> float:
        return 2.0 * self.per_gender_total


@dataclass(frozen=True)
class FlowReport:
    """Mass flows of one step, in two-gender population units."""

    step: int
    entered_mass: float
    matched_mass: float
    aged_out_mass: float
    loss_added: float
    loss_matched_added: float
    population_after_entry: float
    diag_mass: float


def continuum_init(T: int) -> DensityGrid:
    if T < 4:
        raise ValueError(f"lifetime T must be at least 4, got {T}")
    return DensityGrid(T=T, mass=np.zeros((T, T), dtype=np.float64))


class _Cells:
    """Flattened cell coordinates shared by the kernels."""

    def __init__(self, T: int):
        self.T = T
        values_grid, ages_grid = np.meshgrid(
            np.arange(T, 2 * T, dtype=np.int64),
            np.arange(0, T, dtype=np.int64),
            indexing="ij",
        )
        self.values = values_grid.ravel()
        self.ages = ages_grid.ravel()
        self.count = self.values.size

    def pair_losses(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Loss of cell rows[i] against cell cols[j], as a dense block."""
        a_r = self.ages[rows].astype(np.float64)
        a_c = self.ages[cols].astype(np.float64)
        v_r = self.values[rows].astype(np.float64)
        v_c = self.values[cols].astype(np.float64)
        shared = self.T - np.maximum.outer(a_r, a_c)
        utility = shared * v_c[np.newaxis, :]
        return np.maximum(0.0, v_r[:, np.newaxis] * self.T - utility)


class _MatchAllKernel:
    """Everything is mutually acceptable: cells empty completely each step."""

    def __init__(self, cells: _Cells):
        self.cells = cells

    def match_fractions(self, mu: np.ndarray, total: float) -> np.ndarray:
        return np.ones_like(mu)

    def loss_rate(self, mu: np.ndarray, total: float) -> float:
        active = np.nonzero(mu)[0]
        if active.size == 0:
            return 0.0
        block = self.cells.pair_losses(active, active)
        m = mu[active]
        return float(m @ (block @ m)) / total


class _PartitionKernel:
    """Acceptance is group equality (the strip partition)."""

    def __init__(self, cells: _Cells, part: StripPartition, memory_cap: int):
        self.cells = cells
        self.codes = part.strip_codes(cells.values, cells.ages)
        self.group_count = part.strip_count
        self.members = [np.nonzero(self.codes == c)[0] for c in range(self.group_count)]
        block_bytes = 4 * sum(idx.size**2 for idx in self.members)
        if block_bytes > memory_cap:
            raise KernelMemoryError(
                f"per-strip loss kernels need {block_bytes / 1e9:.1f} GB for T={cells.T}"
            )
        self.blocks = [
            self.cells.pair_losses(idx, idx).astype(np.float32) for idx in self.members
        ]

    def match_fractions(self, mu: np.ndarray, total: float) -> np.ndarray:
        group_mass = np.zeros(self.group_count)
        np.add.at(group_mass, self.codes, mu)
        return np.minimum(group_mass[self.codes] / total, 1.0)

    def loss_rate(self, mu: np.ndarray, total: float) -> float:
        loss = 0.0
        for idx, block in zip(self.members, self.blocks):
            m = mu[idx]
            loss += float(m @ (block @ m.astype(np.float32)).astype(np.float64))
        return loss / total


class _ThresholdKernel:
    """Arbitrary mutual-acceptance relation, stored dense in float32."""

    def __init__(self, cells: _Cells, kind: StrategyKind, T: int, memory_cap: int):
        self.cells = cells
        c = cells.count
        if 2 * 4 * c * c > memory_cap:
            raise KernelMemoryError(
                f"dense acceptance kernels need {2 * 4 * c * c / 1e9:.1f} GB for T={T}"
            )
        self.accept = np.empty((c, c), dtype=np.float32)
        self.loss_weighted = np.empty((c, c), dtype=np.float32)
        chunk = max(1, int(2e7) // c)
        for lo in range(0, c, chunk):
            hi = min(lo + chunk, c)
            rows = np.arange(lo, hi)
            forward = acceptance_mask(
                kind,
                cells.values[rows, np.newaxis],
                cells.ages[rows, np.newaxis],
                cells.values[np.newaxis, :],
                cells.ages[np.newaxis, :],
                None,
                T,
            )
            backward = acceptance_mask(
                kind,
                cells.values[np.newaxis, :],
                cells.ages[np.newaxis, :],
                cells.values[rows, np.newaxis],
                cells.ages[rows, np.newaxis],
                None,
                T,
            )
            mutual = forward & backward
            self.accept[lo:hi] = mutual
            self.loss_weighted[lo:hi] = cells.pair_losses(rows, np.arange(c)) * mutual

    def match_fractions(self, mu: np.ndarray, total: float) -> np.ndarray:
        acceptable = (self.accept @ mu.astype(np.float32)).astype(np.float64)
        return np.minimum(acceptable / total, 1.0)

    def loss_rate(self, mu: np.ndarray, total: float) -> float:
        weighted = (self.loss_weighted @ mu.astype(np.float32)).astype(np.float64)
        return float(mu @ weighted) / total


_kernel_cache: dict[tuple[StrategyKind, int], object] = {}
_diag_mask_cache: dict[int, np.ndarray] = {}


def _diag_band_mask(T: int) -> np.ndarray:
    """Flattened mask of the width-1 diagonal band starting at value 3T/2."""
    mask = _diag_mask_cache.get(T)
    if mask is None:
        cells = _Cells(T)
        lo = (3 * T) // 2
        d = cells.values - 2 * cells.ages
        mask = (d == lo) | (d == lo + 1)
        _diag_mask_cache[T] = mask
    return mask


def _get_kernel(kind: StrategyKind, T: int, part: StripPartition | None, memory_cap: int):
    key = (kind, T)
    kernel = _kernel_cache.get(key)
    if kernel is None:
        cells = _Cells(T)
        if kind is StrategyKind.ACCEPT_ALL:
            kernel = _MatchAllKernel(cells)
        elif kind is StrategyKind.MODIFIED_REASONABLE:
            kernel = _PartitionKernel(cells, part if part is not None else build_partition(T), memory_cap)
        else:
            kernel = _ThresholdKernel(cells, kind, T, memory_cap)
        _kernel_cache.clear()  # keep at most one heavyweight kernel alive
        _kernel_cache[key] = kernel
    return kernel


def continuum_step(
    grid: DensityGrid,
    kind: StrategyKind,
    part: StripPartition | None,
    n: int,
    T: int,
    memory_cap: int = KERNEL_MEMORY_CAP_BYTES,
) -> tuple[DensityGrid, FlowReport]:
    """Advance the density grid one step in place; returns (grid, flows)."""
    if T != grid.T:
        raise ValueError("step T must match the grid's lifetime")
    kernel = _get_kernel(kind, T, part, memory_cap)

    grid.mass[:, 0] += n / (2.0 * T)
    entered = float(n)
    total = grid.mass.sum()
    population_after_entry = 2.0 * total

    mu = grid.mass.ravel()
    diag_mass = 0.0
    if total > 0.0:
        diag_mass = 2.0 * float(mu[_diag_band_mask(T)].sum())

        fractions = kernel.match_fractions(mu, total)
        matched = mu * fractions
        loss_matched = 2.0 * kernel.loss_rate(mu, total)
        mu -= matched
        matched_mass = 2.0 * float(matched.sum())
    else:
        matched_mass = 0.0
        loss_matched = 0.0

    aging_out = grid.mass[:, T - 1].copy()
    aged_out_mass = 2.0 * float(aging_out.sum())
    loss_aged = 2.0 * float(aging_out @ np.arange(T, 2 * T)) * T
    grid.mass[:, 1:] = grid.mass[:, :-1]
    grid.mass[:, 0] = 0.0
    grid.step += 1

    report = FlowReport(
        step=grid.step - 1,
        entered_mass=entered,
        matched_mass=matched_mass,
        aged_out_mass=aged_out_mass,
        loss_added=loss_matched + loss_aged,
        loss_matched_added=loss_matched,
        population_after_entry=population_after_entry,
        diag_mass=diag_mass,
    )
    return grid, report


@dataclass(frozen=True)
class ContinuumSummary:
    """Aggregates of one deterministic run (full-horizon averages plus final state)."""

    n: int
    T: int
    steps: int
    strategy: str
    avg_population: float
    final_population: float
    total_loss: float
    matched_mass: float
    aged_out_mass: float
    avg_loss: float | None
    loss_over_T: float | None
    final_loss_over_T: float | None
    normalized_population: float | None
    normalized_loss: float | None
    converged: bool
    converged_step: int | None
    max_conservation_error: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "T": self.T,
            "steps": self.steps,
            "strategy": self.strategy,
            "model": "continuum",
            "avg_population": self.avg_population,
            "final_population": self.final_population,
            "total_loss": self.total_loss,
            "matched_mass": self.matched_mass,
            "aged_out_mass": self.aged_out_mass,
            "avg_loss": self.avg_loss,
            "loss_over_T": self.loss_over_T,
            "final_loss_over_T": self.final_loss_over_T,
            "normalized_population": self.normalized_population,
            "normalized_loss": self.normalized_loss,
            "converged": self.converged,
            "converged_step": self.converged_step,
            "max_conservation_error": self.max_conservation_error,
        }


@dataclass
class ContinuumResult:
    config: RunConfig
    summary: ContinuumSummary
    population: np.ndarray
    matched: np.ndarray
    aged_out: np.ndarray
    losses: np.ndarray
    losses_matched: np.ndarray
    diag_mass: np.ndarray


def continuum_run(config: RunConfig, memory_cap: int = KERNEL_MEMORY_CAP_BYTES) -> ContinuumResult:
    """Iterate the mean-field dynamics for config.steps steps from an empty grid.

    The convergence flag reports whether the relative per-step population
    change stayed below 1e-9 for T consecutive steps at any point.
    """
    T, n = config.T, config.n
    part = build_partition(T)
    grid = continuum_init(T)

    population = np.empty(config.steps)
    matched = np.empty(config.steps)
    aged_out = np.empty(config.steps)
    losses = np.empty(config.steps)
    losses_matched = np.empty(config.steps)
    diag = np.empty(config.steps)

    converged_step: int | None = None
    quiet_streak = 0
    prev_population = None
    max_residual = 0.0

    for i in range(config.steps):
        before = grid.population
        grid, flow = continuum_step(grid, config.strategy, part, n, T, memory_cap)
        population[i] = flow.population_after_entry
        matched[i] = flow.matched_mass
        aged_out[i] = flow.aged_out_mass
        losses[i] = flow.loss_added
        losses_matched[i] = flow.loss_matched_added
        diag[i] = flow.diag_mass

        residual = abs(
            (grid.population - before)
            - (flow.entered_mass - flow.matched_mass - flow.aged_out_mass)
        )
        scale = max(grid.population, flow.entered_mass, 1.0)
        max_residual = max(max_residual, residual / scale)

        if prev_population is not None and flow.population_after_entry > 0:
            change = abs(flow.population_after_entry - prev_population) / flow.population_after_entry
            quiet_streak = quiet_streak + 1 if change < CONVERGENCE_TOL else 0
            if converged_step is None and quiet_streak >= T:
                converged_step = i
        prev_population = flow.population_after_entry

    departed = matched.sum() + aged_out.sum()
    total_loss = float(losses.sum())
    avg_loss = total_loss / departed if departed > 0 else None
    final_window = max(1, min(T, config.steps))
    final_departed = matched[-final_window:].sum() + aged_out[-final_window:].sum()
    final_loss_over_T = (
        float(losses[-final_window:].sum()) / final_departed / T if final_departed > 0 else None
    )
    sqrt_t = math.sqrt(T)

    summary = ContinuumSummary(
        n=n,
        T=T,
        steps=config.steps,
        strategy=config.strategy.value,
        avg_population=float(population.mean()),
        final_population=float(population[-1]),
        total_loss=total_loss,
        matched_mass=float(matched.sum()),
        aged_out_mass=float(aged_out.sum()),
        avg_loss=avg_loss,
        loss_over_T=avg_loss / T if avg_loss is not None else None,
        final_loss_over_T=final_loss_over_T,
        normalized_population=float(population.mean()) / (n * sqrt_t) if n else None,
        normalized_loss=avg_loss / (T * sqrt_t) if avg_loss is not None else None,
        converged=converged_step is not None,
        converged_step=converged_step,
        max_conservation_error=max_residual,
    )
    return ContinuumResult(
        config=config,
        summary=summary,
        population=population,
        matched=matched,
        aged_out=aged_out,
        losses=losses,
        losses_matched=losses_matched,
        diag_mass=diag,
    )
