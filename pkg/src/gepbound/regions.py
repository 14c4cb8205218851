"""Operation / margin / collision partitions of the coding space.

Coding vectors are plain tuples of code indices: ``(g1, g2)`` in the
synchronous model and one entry per packet in the asynchronous one, so the
same partition logic serves both.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

PRIOR_TOL = 1e-12

OPERATION = "operation"
MARGIN = "margin"
COLLISION = "collision"
REGION_NAMES = (OPERATION, MARGIN, COLLISION)


class RegionError(ValueError):
    """Raised when a partition or sub-decoder region choice is inconsistent."""


class CodingVector(NamedTuple):
    g1: int
    g2: int


def coding_space(*sizes) -> list[tuple]:
    """All coding vectors, in lexicographic order."""
    return [tuple(v) for v in itertools.product(*(range(s) for s in sizes))]


def _as_set(vectors) -> frozenset:
    return frozenset(tuple(int(x) for x in v) for v in vectors)


@dataclass(frozen=True)
class SubDecoderRegions:
    operation: frozenset
    margin: frozenset
    collision: frozenset

    def __post_init__(self):
        for name in REGION_NAMES:
            object.__setattr__(self, name, _as_set(getattr(self, name)))
        if self.operation & self.margin or self.operation & self.collision or self.margin & self.collision:
            raise RegionError("operation, margin and collision regions must be disjoint")

    @property
    def outside(self) -> frozenset:
        return self.margin | self.collision

    @property
    def space(self) -> frozenset:
        return self.operation | self.margin | self.collision

    def region_of(self, g) -> str:
        g = tuple(g)
        if g in self.operation:
            return OPERATION
        if g in self.margin:
            return MARGIN
        if g in self.collision:
            return COLLISION
        raise RegionError(f"coding vector {g} is in no region")

    def check_cover(self, space):
        space = _as_set(space)
        if self.space != space:
            missing = sorted(space - self.space)
            extra = sorted(self.space - space)
            raise RegionError(f"regions do not cover the coding space (missing {missing}, unknown {extra})")
        return self

    def swapped(self) -> "SubDecoderRegions":
        return SubDecoderRegions(*(frozenset(g[::-1] for g in getattr(self, n)) for n in REGION_NAMES))


@dataclass(frozen=True)
class RegionPartition:
    """Base three-way partition plus prior weights P(g)."""

    operation: frozenset
    margin: frozenset
    collision: frozenset
    priors: dict

    def __post_init__(self):
        for name in REGION_NAMES:
            object.__setattr__(self, name, _as_set(getattr(self, name)))
        object.__setattr__(self, "priors", {tuple(int(x) for x in k): float(v) for k, v in self.priors.items()})
        SubDecoderRegions(self.operation, self.margin, self.collision)
        space = self.operation | self.margin | self.collision
        if set(self.priors) != space:
            raise RegionError("priors must be given for exactly the vectors of the partition")
        if any(p < 0 for p in self.priors.values()):
            raise RegionError("priors must be nonnegative")
        total = math.fsum(self.priors.values())
        if abs(total - 1.0) > PRIOR_TOL:
            raise RegionError(f"priors sum to {total!r}, not 1")

    @classmethod
    def from_labels(cls, labels: dict, priors: dict | None = None) -> "RegionPartition":
        """Build from {vector: 'operation' | 'margin' | 'collision'}; uniform priors by default."""
        sets = {name: set() for name in REGION_NAMES}
        for g, lab in labels.items():
            if lab not in sets:
                raise RegionError(f"unknown region label {lab!r} for {g}")
            sets[lab].add(tuple(g))
        if priors is None:
            priors = {tuple(g): 1.0 / len(labels) for g in labels}
        return cls(sets[OPERATION], sets[MARGIN], sets[COLLISION], priors)

    @property
    def space(self) -> frozenset:
        return self.operation | self.margin | self.collision

    def as_regions(self) -> SubDecoderRegions:
        return SubDecoderRegions(self.operation, self.margin, self.collision)

    def check_cover(self, space):
        self.as_regions().check_cover(space)
        return self

    def prior(self, g) -> float:
        return self.priors[tuple(g)]

    def swapped(self) -> "RegionPartition":
        r = self.as_regions().swapped()
        return RegionPartition(r.operation, r.margin, r.collision, {g[::-1]: p for g, p in self.priors.items()})


def derive_d12_regions(base: RegionPartition, r12) -> SubDecoderRegions:
    r12 = _as_set(r12)
    if not r12 <= base.operation:
        raise RegionError(f"r12 leaves the operation region: {sorted(r12 - base.operation)}")
    return SubDecoderRegions(r12, base.margin | (base.operation - r12), base.collision)


def derive_d1_regions(base: RegionPartition, r12, r1) -> SubDecoderRegions:
    r12, r1 = _as_set(r12), _as_set(r1)
    if not r12 <= base.operation:
        raise RegionError(f"r12 leaves the operation region: {sorted(r12 - base.operation)}")
    if r1 & r12:
        raise RegionError(f"r1 overlaps r12 at {sorted(r1 & r12)}")
    if not r1 <= base.operation:
        raise RegionError(f"r1 leaves the operation region: {sorted(r1 - base.operation)}")
    # vectors in neither r1 nor r12 are decoded by nobody; the margin keeps the cover intact
    rest = base.operation - r1 - r12
    return SubDecoderRegions(r1, base.margin | r12 | rest, base.collision)


def slice_matching(vectors, fixed: dict) -> frozenset:
    """Vectors whose entries at the given positions equal the given values."""
    return frozenset(g for g in vectors if all(g[k] == v for k, v in fixed.items()))


def region_slice(regions: SubDecoderRegions, g1: int | None = None, g2: int | None = None) -> frozenset:
    """Operation-region vectors with a fixed g1, a fixed g2, or no constraint."""
    fixed = {}
    if g1 is not None:
        fixed[0] = g1
    if g2 is not None:
        fixed[1] = g2
    return slice_matching(regions.operation, fixed)


def exact_partitions(operation) -> list[tuple[frozenset, frozenset]]:
    """All (r12, r1) with r12 and r1 disjoint and covering ``operation``.

    Ordered by the bitmask of r12 over the sorted vectors, so the list is
    deterministic and has 2^|operation| entries.
    """
    vecs = sorted(operation)
    out = []
    for mask in range(2 ** len(vecs)):
        r12 = frozenset(v for k, v in enumerate(vecs) if mask >> k & 1)
        out.append((r12, frozenset(vecs) - r12))
    return out
