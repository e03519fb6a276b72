"""Brute-force enumeration oracles for the engine's probabilistic primitives.

Everything here is exact: probabilities are :class:`fractions.Fraction`
computed by enumerating every possible pairing, and the loss-bound scan
visits every same-strip pair of grid points.  These are the ground
truths the stochastic engine is tested against, so none of them share
code with the engine.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import StripPartition, build_partition

__all__ = [
    "PairingUniverse",
    "exact_match_probability",
    "cylinder_dependence_check",
    "CylinderReport",
    "acceptall_expected_loss",
    "strip_pair_loss_scan",
    "LossScanReport",
]

ENUMERATION_CAP = 8


@dataclass(frozen=True)
class PairingUniverse:
    """All min(m, w)-pairings of the smaller side into the larger one.

    Each injection is a tuple of (man_index, woman_index) pairs; the
    number of injections is max! / (max - min)!.
    """

    m: int
    w: int
    injections: tuple[tuple[tuple[int, int], ...], ...]

    @classmethod
    def enumerate(cls, m: int, w: int) -> "PairingUniverse":
        if m > ENUMERATION_CAP or w > ENUMERATION_CAP:
            raise ValueError(f"enumeration limited to sides of at most {ENUMERATION_CAP}")
        if m <= w:
            injections = tuple(
                tuple((i, combo[i]) for i in range(m))
                for combo in itertools.permutations(range(w), m)
            )
        else:
            injections = tuple(
                tuple((combo[j], j) for j in range(w))
                for combo in itertools.permutations(range(m), w)
            )
        return cls(m=m, w=w, injections=injections)


def exact_match_probability(m: int, w: int, w_acceptable: int) -> Fraction:
    """Probability that a distinguished man lands an acceptable, accepting woman.

    Counting injections in which man 0 is paired with one of the first
    ``w_acceptable`` women.  Must equal w'/max(m, w) exactly.
    """
    if not 0 <= w_acceptable <= w:
        raise ValueError("acceptable-women count must lie in [0, w]")
    universe = PairingUniverse.enumerate(m, w)
    if not universe.injections:
        return Fraction(0)
    hits = 0
    for injection in universe.injections:
        for man, woman in injection:
            if man == 0:
                if woman < w_acceptable:
                    hits += 1
                break
    return Fraction(hits, len(universe.injections))


@dataclass(frozen=True)
class CylinderReport:
    """Exact moments for the paired-into-subset indicators and their complements."""

    e_product: Fraction
    product_of_e: Fraction
    e_product_complement: Fraction
    product_of_e_complement: Fraction

    @property
    def ok_x(self) -> bool:
        return self.e_product <= self.product_of_e

    @property
    def ok_complement(self) -> bool:
        return self.e_product_complement <= self.product_of_e_complement


def cylinder_dependence_check(
    m: int, w: int, men_subset: tuple[int, ...], women_subset: tuple[int, ...]
) -> CylinderReport:
    """Enumerate a uniform pairing and test the correlation inequalities.

    X_i = 1 when the i-th man of ``men_subset`` is paired with a woman in
    ``women_subset``.  Both {X_i} and {1 - X_i} must satisfy
    E[prod] <= prod E[.] for the indicators to be negative cylinder
    dependent.
    """
    if m > 7 or w > 7:
        raise ValueError("cylinder check limited to sides of at most 7")
    if any(not 0 <= a < m for a in men_subset) or any(not 0 <= b < w for b in women_subset):
        raise ValueError("subset members out of range")
    universe = PairingUniverse.enumerate(m, w)
    total = len(universe.injections)
    women_set = set(women_subset)

    prod_hits = 0
    prod_comp_hits = 0
    single_hits = {a: 0 for a in men_subset}
    for injection in universe.injections:
        partner = dict(injection)
        xs = [1 if partner.get(a) in women_set else 0 for a in men_subset]
        for a, x in zip(men_subset, xs):
            single_hits[a] += x
        if all(xs):
            prod_hits += 1
        if not any(xs):
            prod_comp_hits += 1

    product_of_e = Fraction(1)
    product_of_e_complement = Fraction(1)
    for a in men_subset:
        e = Fraction(single_hits[a], total)
        product_of_e *= e
        product_of_e_complement *= 1 - e

    return CylinderReport(
        e_product=Fraction(prod_hits, total),
        product_of_e=product_of_e,
        e_product_complement=Fraction(prod_comp_hits, total),
        product_of_e_complement=product_of_e_complement,
    )


def acceptall_expected_loss(T: int) -> Fraction:
    """Idealized per-departure loss when everyone matches at age 0.

    With balanced genders each agent pairs immediately with a uniform
    partner, losing T * (own value - partner value)^+; averaging over
    independent uniform values gives (T^2 - 1) / 6 exactly.
    """
    if T < 1:
        raise ValueError("T must be positive")
    return Fraction(T * T - 1, 6)


@dataclass(frozen=True)
class LossScanReport:
    T: int
    pairs_checked: int
    violations: int
    min_slack: float
    max_loss: int


def strip_pair_loss_scan(T: int, part: StripPartition | None = None) -> LossScanReport:
    """Exhaustively check the per-match loss bound over all same-strip pairs.

    For every ordered pair of grid points sharing a strip, the loss a
    hypothetical match inflicts on the first point must stay within
    4*T*age + 2*T*sqrt(T).  Returns the worst slack (bound - loss); a
    correct partition yields zero violations.
    """
    if T > 256:
        raise ValueError("scan limited to T <= 256")
    if part is None:
        part = build_partition(T)

    values_grid, ages_grid = np.meshgrid(
        np.arange(T, 2 * T, dtype=np.int64),
        np.arange(0, T, dtype=np.int64),
        indexing="ij",
    )
    values = values_grid.ravel()
    ages = ages_grid.ravel()
    codes = part.strip_codes(values, ages)

    sqrt_t = math.sqrt(T)
    pairs_checked = 0
    violations = 0
    min_slack = math.inf
    max_loss = 0
    for code in range(part.strip_count):
        sel = codes == code
        v = values[sel]
        a = ages[sel]
        bound = 4.0 * T * a + 2.0 * T * sqrt_t
        # ordered pairs (x over chunk, y over strip); each unordered pair
        # shows up in both orders so both sides' losses are covered
        chunk = max(1, int(2e7 // max(1, v.size)))
        for lo in range(0, v.size, chunk):
            hi = min(lo + chunk, v.size)
            shared = T - np.maximum.outer(a[lo:hi], a)
            utility = shared * v[np.newaxis, :]
            loss = np.maximum(0, v[lo:hi, np.newaxis] * T - utility)
            slack = bound[lo:hi, np.newaxis] - loss
            pairs_checked += loss.size
            violations += int((slack < 0).sum())
            min_slack = min(min_slack, float(slack.min()))
            max_loss = max(max_loss, int(loss.max()))
    return LossScanReport(
        T=T,
        pairs_checked=pairs_checked,
        violations=violations,
        min_slack=min_slack,
        max_loss=max_loss,
    )
