"""Sparse empirical joint distributions and discrete information measures.

Composite world alphabets reach 300^3 symbols while a trace contributes only
a few thousand observations, so joints are stored as count maps over the
observed tuples only.  All probabilities are exact ratios count/total and
every sum runs over observed support, which makes the standard conventions
(0 log 0 = 0, skip zero-probability conditions) automatic.  Logs are base 2;
results are in bits.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

__all__ = [
    "SparseJoint",
    "estimate_joint",
    "entropy",
    "conditional_entropy",
    "mutual_information",
    "conditional_mutual_information",
]


class SparseJoint:
    """Empirical joint distribution as a count map over symbol tuples."""

    __slots__ = ("arity", "counts", "total")

    def __init__(self, arity: int, counts: dict[tuple[int, ...], int]):
        if arity < 1:
            raise ValueError("arity must be >= 1")
        total = 0
        for tup, c in counts.items():
            if len(tup) != arity:
                raise ValueError(f"tuple {tup} does not match arity {arity}")
            if c < 1:
                raise ValueError(f"count for {tup} must be >= 1, got {c}")
            total += c
        if total == 0:
            raise ValueError("empty joint distribution")
        self.arity = arity
        self.counts = dict(counts)
        self.total = total

    def prob(self, tup: tuple[int, ...]) -> float:
        return self.counts.get(tup, 0) / self.total

    def marginal(self, coords: Sequence[int]) -> "SparseJoint":
        """Marginal over the given coordinates (kept in the given order)."""
        coords = self._check_coords(coords)
        out: Counter = Counter()
        for tup, c in self.counts.items():
            out[tuple(tup[i] for i in coords)] += c
        return SparseJoint(len(coords), dict(out))

    def marginal_counts(self, coords: Sequence[int]) -> dict[tuple[int, ...], int]:
        coords = self._check_coords(coords)
        out: Counter = Counter()
        for tup, c in self.counts.items():
            out[tuple(tup[i] for i in coords)] += c
        return dict(out)

    def _check_coords(self, coords: Sequence[int]) -> tuple[int, ...]:
        coords = tuple(int(i) for i in coords)
        if not coords:
            raise ValueError("coordinate set must be non-empty")
        if len(set(coords)) != len(coords):
            raise ValueError(f"duplicate coordinates in {coords}")
        if any(i < 0 or i >= self.arity for i in coords):
            raise ValueError(f"coordinates {coords} out of range for arity {self.arity}")
        return coords


def estimate_joint(sequences: Sequence[Sequence[int]]) -> SparseJoint:
    """Count co-occurring symbols across aligned sequences."""
    if not sequences:
        raise ValueError("need at least one sequence")
    length = len(sequences[0])
    if any(len(s) != length for s in sequences):
        raise ValueError("sequences must have equal length")
    if length < 1:
        raise ValueError("sequences must be non-empty")
    counts = Counter(zip(*(map(int, s) for s in sequences)))
    return SparseJoint(len(sequences), dict(counts))


def entropy(joint: SparseJoint, coords: Sequence[int] | None = None) -> float:
    """H(X) in bits; with ``coords``, the entropy of that marginal."""
    counts = joint.counts if coords is None else joint.marginal_counts(coords)
    n = joint.total
    return -math.fsum(c / n * math.log2(c / n) for c in counts.values())


def conditional_entropy(joint: SparseJoint, target: Sequence[int],
                        given: Sequence[int]) -> float:
    """H(target | given) in bits."""
    target = joint._check_coords(target)
    given = joint._check_coords(given)
    if set(target) & set(given):
        raise ValueError("target and given coordinates must be disjoint")
    pair = joint.marginal_counts(tuple(target) + tuple(given))
    cond = joint.marginal_counts(given)
    n = joint.total
    k = len(target)
    return -math.fsum(
        c / n * math.log2(c / cond[tup[k:]]) for tup, c in pair.items())


def mutual_information(joint: SparseJoint, coords_a: Sequence[int],
                       coords_b: Sequence[int]) -> float:
    """I(A;B) in bits; symmetric, non-negative up to rounding."""
    coords_a = joint._check_coords(coords_a)
    coords_b = joint._check_coords(coords_b)
    if set(coords_a) & set(coords_b):
        raise ValueError("coordinate sets must be disjoint")
    pair = joint.marginal_counts(tuple(coords_a) + tuple(coords_b))
    marg_a = joint.marginal_counts(coords_a)
    marg_b = joint.marginal_counts(coords_b)
    n = joint.total
    k = len(coords_a)
    return math.fsum(
        c / n * math.log2(c * n / (marg_a[tup[:k]] * marg_b[tup[k:]]))
        for tup, c in pair.items())


def conditional_mutual_information(joint: SparseJoint,
                                   coords_a: Sequence[int] = (0,),
                                   coords_b: Sequence[int] = (1,),
                                   coords_z: Sequence[int] = (2,)) -> float:
    """I(A;B|Z) = sum p(a,b,z) log2 [p(a,b,z) p(z) / (p(a,z) p(b,z))]."""
    coords_a = joint._check_coords(coords_a)
    coords_b = joint._check_coords(coords_b)
    coords_z = joint._check_coords(coords_z)
    if (set(coords_a) & set(coords_b)) or (set(coords_a) & set(coords_z)) \
            or (set(coords_b) & set(coords_z)):
        raise ValueError("coordinate sets must be pairwise disjoint")
    trip = joint.marginal_counts(tuple(coords_a) + tuple(coords_b) + tuple(coords_z))
    ka, kb = len(coords_a), len(coords_b)
    az = joint.marginal_counts(tuple(coords_a) + tuple(coords_z))
    bz = joint.marginal_counts(tuple(coords_b) + tuple(coords_z))
    z = joint.marginal_counts(coords_z)
    n = joint.total
    return math.fsum(
        c / n * math.log2(c * z[tup[ka + kb:]] /
                          (az[tup[:ka] + tup[ka + kb:]] * bz[tup[ka:]]))
        for tup, c in trip.items())
