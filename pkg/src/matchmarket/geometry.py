"""Strip partition of the value-by-age box, point location, and worth.

The market lives on a T x T grid: values on {T, ..., 2T-1}, ages on
{0, ..., T-1}.  An unmatched agent keeps its value and gains one unit of
age per step, so it moves along a slope-2 diagonal of the grid.  The
canonical coordinate for those diagonals is ``d = value - 2*age``; it
drops by exactly 2 per step.

The partition slices the box into two families of diagonal bands:

* Type 1 strips touch the top edge (new agents enter through them).
  Strip i covers d in [T + (i-1)*w, T + i*w) for w = floor(sqrt(T)),
  left boundary included, right excluded.  There are w of them; the
  rightmost one also absorbs the leftover range up to d = 2T-1 when T
  is not a perfect square.
* Type 2 strips sit below, with heights w, w, 2w, 4w, ... doubling up
  to T/2 (the final height clipped so the heights sum to T).  Strip k
  covers d in [b_k, b_{k-1}) where b_0 = T and b_k = b_{k-1} - 2*h_k:
  lower boundary included, upper excluded.

Every grid point belongs to exactly one strip; partitions are immutable
and safe to share between concurrent runs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridPoint",
    "StripKind",
    "StripId",
    "StripPartition",
    "build_partition",
    "diag_coord",
    "strip_of",
    "worth",
]


class StripKind(enum.Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"


@dataclass(frozen=True)
class GridPoint:
    """A (value, age) cell of the box; valid when T <= value <= 2T-1, 0 <= age <= T-1."""

    value: int
    age: int


@dataclass(frozen=True)
class StripId:
    """Identifies one strip: Type 1 indexed 1..w right-to-left in entry order, Type 2 indexed 1..K top-to-bottom."""

    kind: StripKind
    index: int


@dataclass(frozen=True)
class StripPartition:
    """The full strip decomposition for lifetime T.

    ``diag_boundaries`` is the descending list b_0 > b_1 > ... > b_K of
    Type 2 cut points in diagonal coordinates, with b_0 = T.
    """

    T: int
    w: int
    type2_heights: tuple[int, ...]
    diag_boundaries: tuple[int, ...]
    # ascending copy for vectorized searchsorted point location
    _boundaries_asc: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        asc = np.array(self.diag_boundaries[::-1], dtype=np.int64)
        object.__setattr__(self, "_boundaries_asc", asc)

    @property
    def type1_count(self) -> int:
        return self.w

    @property
    def type2_count(self) -> int:
        return len(self.type2_heights)

    @property
    def strip_count(self) -> int:
        """Total number of strips N = w + K."""
        return self.w + len(self.type2_heights)

    def strip_codes(self, values: np.ndarray, ages: np.ndarray) -> np.ndarray:
        """Vectorized point location: code 0..w-1 for Type 1 strip index-1,
        code w..N-1 for Type 2 strip w + index-1."""
        values = np.asarray(values, dtype=np.int64)
        ages = np.asarray(ages, dtype=np.int64)
        d = values - 2 * ages
        if d.size and (d.max(initial=np.iinfo(np.int64).min) > 2 * self.T - 1
                       or d.min(initial=np.iinfo(np.int64).max) < self.diag_boundaries[-1]):
            raise ValueError("point outside the value-by-age box for this partition")
        type1_idx = np.minimum((d - self.T) // self.w, self.w - 1)
        # count of boundaries <= d locates the Type 2 band [b_k, b_{k-1})
        K = len(self.type2_heights)
        n_le = np.searchsorted(self._boundaries_asc, d, side="right")
        type2_idx = K + 1 - n_le  # 1-based Type 2 index
        return np.where(d >= self.T, type1_idx, self.w + type2_idx - 1)

    def census(self, values: np.ndarray, ages: np.ndarray) -> np.ndarray:
        """Per-strip head counts (code order) for the given agents."""
        return np.bincount(self.strip_codes(values, ages), minlength=self.strip_count)

    def strip_ids(self) -> list[StripId]:
        """All strips in code order (Type 1 left-to-right by index, then Type 2)."""
        out = [StripId(StripKind.TYPE1, i) for i in range(1, self.w + 1)]
        out += [StripId(StripKind.TYPE2, k) for k in range(1, len(self.type2_heights) + 1)]
        return out

    def code_of(self, sid: StripId) -> int:
        if sid.kind is StripKind.TYPE1:
            return sid.index - 1
        return self.w + sid.index - 1


def build_partition(T: int) -> StripPartition:
    """Construct the strip partition for lifetime T (requires T >= 4).

    Type 2 heights follow the doubling sequence w, w, 2w, 4w, ... capped
    at T//2, with the final height clipped so the heights sum to T.
    """
    if T < 4:
        raise ValueError(f"lifetime T must be at least 4, got {T}")
    w = math.isqrt(T)
    heights = [w, w]
    step = 2 * w
    while sum(heights) < T:
        heights.append(min(step, T // 2, T - sum(heights)))
        step *= 2
    boundaries = [T]
    for h in heights:
        boundaries.append(boundaries[-1] - 2 * h)
    return StripPartition(
        T=T,
        w=w,
        type2_heights=tuple(heights),
        diag_boundaries=tuple(boundaries),
    )


def diag_coord(p: GridPoint) -> int:
    """Diagonal coordinate d = value - 2*age; drops by 2 per unmatched step."""
    return p.value - 2 * p.age


def _check_point(p: GridPoint, T: int) -> None:
    if not (T <= p.value <= 2 * T - 1 and 0 <= p.age <= T - 1):
        raise ValueError(f"point {p} outside the box for T={T}")


def strip_of(part: StripPartition, p: GridPoint) -> StripId:
    """Locate the unique strip containing p."""
    _check_point(p, part.T)
    code = int(part.strip_codes(np.array([p.value]), np.array([p.age]))[0])
    if code < part.w:
        return StripId(StripKind.TYPE1, code + 1)
    return StripId(StripKind.TYPE2, code - part.w + 1)


def worth(p: GridPoint, T: int) -> int:
    """Maximum utility a partner could still derive from this agent: value * (T - age)."""
    _check_point(p, T)
    return p.value * (T - p.age)
