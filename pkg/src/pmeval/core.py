"""Bin partitions and discrete predictive distributions."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (BelowPartition, DegenerateMass, EmptyEdges, IndexOutOfRange,
                     NegativeWeight, NonMonotonicEdges)

# Snapshots whose raw mass falls below this are treated as dead markets.
MASS_FLOOR = 0.05
SUM_TOL = 1e-9


@dataclass(frozen=True)
class BinPartition:
    """Ordered half-open bins ``[e_i, e_{i+1})`` with the last bin ``[e_{K-1}, inf)``."""

    edges: tuple[float, ...]
    lower_closed: bool = True

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if not edges:
            raise EmptyEdges("partition needs at least one edge")
        if not all(np.isfinite(edges)):
            raise NonMonotonicEdges(f"edges must be finite: {edges}")
        for a, b in zip(edges, edges[1:]):
            if not b > a:
                raise NonMonotonicEdges(f"edges not strictly increasing at {a!r} -> {b!r}")
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return len(self.edges)

    def __len__(self) -> int:
        return len(self.edges)

    def bounds(self, i: int) -> tuple[float, float]:
        if not 0 <= i < self.n_bins:
            raise IndexOutOfRange(f"bin {i} outside 0..{self.n_bins - 1}")
        upper = self.edges[i + 1] if i + 1 < self.n_bins else float("inf")
        return self.edges[i], upper

    def widths(self) -> np.ndarray:
        """Widths of the bounded bins (length K-1)."""
        return np.diff(np.asarray(self.edges))

    def label(self, i: int) -> str:
        lo, hi = self.bounds(i)
        return f"[{lo:g}, {hi:g})" if np.isfinite(hi) else f"[{lo:g}, inf)"


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    partition: BinPartition
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size != self.partition.n_bins:
            raise ValueError(
                f"expected {self.partition.n_bins} probabilities, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
            raise ValueError(f"probabilities must lie in [0, 1]: {probs}")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return self.probs.size

    def __repr__(self) -> str:
        return f"PredictiveDistribution(edges={self.partition.edges}, probs={self.probs.tolist()})"


@dataclass(frozen=True)
class Outcome:
    value: float
    bin_index: int


def make_partition(edges: Sequence[float]) -> BinPartition:
    return BinPartition(tuple(edges))


def map_outcome_to_bin(value: float, partition: BinPartition) -> int:
    """Index of the bin containing ``value``; a value on a shared edge goes to the higher bin."""
    if value < partition.edges[0]:
        raise BelowPartition(f"value {value!r} below partition floor {partition.edges[0]!r}")
    return bisect.bisect_right(partition.edges, value) - 1


def make_outcome(value: float, partition: BinPartition) -> Outcome:
    return Outcome(float(value), map_outcome_to_bin(value, partition))


def normalize(weights: Sequence[float], partition: BinPartition) -> PredictiveDistribution:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (partition.n_bins,):
        raise ValueError(f"expected {partition.n_bins} weights, got shape {w.shape}")
    if np.any(w < 0):
        raise NegativeWeight(f"negative weight in {w.tolist()}")
    total = w.sum()
    if not total >= MASS_FLOOR:
        raise DegenerateMass(f"total mass {total!r} below floor {MASS_FLOOR}")
    return PredictiveDistribution(partition, w / total)


def cdf(dist: PredictiveDistribution) -> np.ndarray:
    F = np.cumsum(dist.probs)
    # pin the top bin so rounding never leaves F[-1] != 1
    F[-1] = 1.0
    return np.minimum(F, 1.0)


def point_mass(partition: BinPartition, index: int) -> PredictiveDistribution:
    if not 0 <= index < partition.n_bins:
        raise IndexOutOfRange(f"bin {index} outside 0..{partition.n_bins - 1}")
    probs = np.zeros(partition.n_bins)
    probs[index] = 1.0
    return PredictiveDistribution(partition, probs)
