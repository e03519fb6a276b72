import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchmarket.geometry import (
    GridPoint,
    StripKind,
    StripId,
    build_partition,
    diag_coord,
    strip_of,
    worth,
)

PARTITION_SIZES = (4, 16, 64, 100, 256)


def test_build_partition_t16():
    part = build_partition(16)
    assert part.w == 4
    assert part.type2_heights == (4, 4, 8)
    assert part.type2_count == 3
    assert part.strip_count == 7
    assert part.diag_boundaries == (16, 8, 0, -16)


def test_build_partition_t4():
    part = build_partition(4)
    assert part.w == 2
    assert part.type2_heights == (2, 2)
    assert part.strip_count == 4


def test_build_partition_t100_clips_final_height():
    part = build_partition(100)
    assert part.w == 10
    assert part.type2_heights == (10, 10, 20, 40, 20)
    assert part.type2_count == 5
    assert part.strip_count == 15


@pytest.mark.parametrize("T", (0, 1, 2, 3))
def test_build_partition_rejects_tiny_lifetimes(T):
    with pytest.raises(ValueError):
        build_partition(T)


@pytest.mark.parametrize("T", PARTITION_SIZES)
def test_heights_sum_and_coverage(T):
    part = build_partition(T)
    assert sum(part.type2_heights) == T
    assert part.diag_boundaries[0] == T
    assert part.diag_boundaries[-1] <= -T + 2


@pytest.mark.parametrize("T", PARTITION_SIZES)
def test_partition_exactness(T):
    """Every grid point belongs to exactly one strip, and all strips are hit."""
    part = build_partition(T)
    values, ages = np.meshgrid(np.arange(T, 2 * T), np.arange(0, T), indexing="ij")
    codes = part.strip_codes(values.ravel(), ages.ravel())
    assert codes.min() >= 0
    assert codes.max() == part.strip_count - 1
    assert np.unique(codes).size == part.strip_count
    assert codes.size == T * T


@pytest.mark.parametrize("i", (1, 2, 3, 4))
def test_strip_count_formula_for_powers_of_four(i):
    T = 4**i
    part = build_partition(T)
    w = math.isqrt(T)
    assert part.strip_count == w + int(math.log2(w)) + 1


def test_diag_coord_examples():
    assert diag_coord(GridPoint(16, 0)) == 16
    assert diag_coord(GridPoint(20, 6)) == 8
    assert diag_coord(GridPoint(16, 15)) == -14


def test_strip_of_examples_t16():
    part = build_partition(16)
    assert strip_of(part, GridPoint(16, 0)) == StripId(StripKind.TYPE1, 1)
    assert strip_of(part, GridPoint(31, 0)) == StripId(StripKind.TYPE1, 4)
    assert strip_of(part, GridPoint(20, 6)) == StripId(StripKind.TYPE2, 1)
    assert strip_of(part, GridPoint(16, 15)) == StripId(StripKind.TYPE2, 3)


def test_strip_of_rejects_points_outside_box():
    part = build_partition(16)
    for value, age in ((15, 0), (32, 0), (16, 16), (16, -1)):
        with pytest.raises(ValueError):
            strip_of(part, GridPoint(value, age))


@pytest.mark.parametrize("T", (16, 100))
def test_traversal_times(T):
    """An unmatched agent spends ceil(span/2) steps in a Type 1 strip and
    exactly the strip height in a Type 2 strip (walking d in steps of -2)."""
    part = build_partition(T)
    for value in (T, T + 1, (3 * T) // 2, 2 * T - 2, 2 * T - 1):
        codes = [
            int(part.strip_codes(np.array([value]), np.array([a]))[0]) for a in range(T)
        ]
        runs = []
        for code in codes:
            if runs and runs[-1][0] == code:
                runs[-1][1] += 1
            else:
                runs.append([code, 1])
        # first run may start mid-strip and the last is cut by the lifetime
        for code, length in runs[1:-1]:
            if code < part.w:
                d_low = T + code * part.w
                d_high = 2 * T if code == part.w - 1 else T + (code + 1) * part.w
                expected = (d_high - d_low + 1) // 2
            else:
                expected = part.type2_heights[code - part.w]
            assert length == expected


def test_worth_examples():
    assert worth(GridPoint(16, 0), 16) == 256
    assert worth(GridPoint(150, 40), 100) == 9000
    assert worth(GridPoint(199, 99), 100) == 199


@settings(max_examples=200)
@given(st.integers(1, 4).map(lambda i: 4**i), st.data())
def test_worth_monotone(T, data):
    value = data.draw(st.integers(T, 2 * T - 2))
    age = data.draw(st.integers(0, T - 2))
    assert worth(GridPoint(value, age), T) > worth(GridPoint(value, age + 1), T)
    assert worth(GridPoint(value + 1, age), T) > worth(GridPoint(value, age), T)


@pytest.mark.parametrize("T", (16, 100))
def test_census_counts_match_codes(T):
    part = build_partition(T)
    rng = np.random.default_rng(7)
    values = rng.integers(T, 2 * T, size=500)
    ages = rng.integers(0, T, size=500)
    counts = part.census(values, ages)
    assert counts.sum() == 500
    codes = part.strip_codes(values, ages)
    for code in range(part.strip_count):
        assert counts[code] == (codes == code).sum()
