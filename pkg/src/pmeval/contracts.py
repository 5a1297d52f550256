"""Turn contract prices into predictive distributions over bins."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BinPartition, PredictiveDistribution, normalize
from .errors import (AmbiguousNumber, ContractBinMismatch, DegenerateMass, DuplicateThreshold,
                     NoNumber)
from .ingest import DEFAULT_FIDELITY_MIN, MarketRecord, Structure

log = logging.getLogger(__name__)

_MONTHS = {
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec",
}
# thousands groups joined by "," or a single space; optional decimals and k/K multiplier
_NUMBER = re.compile(r"(?<![\w.,])(\d{1,3}(?:[, ]\d{3})+(?!\d)|\d+)(\.\d+)?([kK])?(?!\w|[.,]\d)")
_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class _NumberToken:
    value: float
    start: int
    is_plain_int: bool
    digits: str


def _numbers(label: str) -> list[_NumberToken]:
    out = []
    for m in _NUMBER.finditer(label):
        digits = m.group(1)
        value = float(re.sub(r"[, ]", "", digits) + (m.group(2) or ""))
        if m.group(3):
            value *= 1000
        plain = m.group(2) is None and m.group(3) is None and not re.search(r"[, ]", digits)
        out.append(_NumberToken(value, m.start(), plain, digits))
    return out


def _token_index(spans: list[tuple[int, int]], pos: int) -> int:
    for i, (a, b) in enumerate(spans):
        if a <= pos < b:
            return i
    return -1


def parse_threshold_label(label: str) -> float:
    """The single numeric threshold in a contract label.

    Date context is excluded: a 4-digit integer within two tokens of a month
    name (a year) and a 1-31 integer right next to a month name (a day).
    """
    spans = [(m.start(), m.end()) for m in re.finditer(r"\S+", label)]
    month_idx = [i for i, (a, b) in enumerate(spans)
                 if re.sub(r"[^a-z]", "", label[a:b].lower()) in _MONTHS]
    candidates = []
    for tok in _numbers(label):
        idx = _token_index(spans, tok.start)
        dist = min((abs(idx - m) for m in month_idx), default=math.inf)
        if tok.is_plain_int and len(tok.digits) == 4 and dist <= 2:
            continue
        if tok.is_plain_int and 1 <= tok.value <= 31 and dist <= 1:
            continue
        candidates.append(tok.value)
    if not candidates:
        raise NoNumber(f"no threshold in label {label!r}")
    if len(candidates) > 1:
        raise AmbiguousNumber(f"label {label!r} has several numbers: {candidates}")
    return candidates[0]


_NUM = r"(\d[\d,]*(?:\.\d+)?[kK]?)"
_RANGE_PATTERNS = [
    (re.compile(rf"^\s*(?:<|less than|under|below|fewer than)\s*{_NUM}", re.I), "below"),
    (re.compile(rf"^\s*{_NUM}\s*(?:-|\u2013|\u2014|to)\s*{_NUM}", re.I), "between"),
    (re.compile(rf"^\s*(?:>=|≥|>|more than|over|above|at least)\s*{_NUM}", re.I), "above"),
    (re.compile(rf"^\s*{_NUM}\s*(?:\+|or more|or higher|or above)", re.I), "above"),
]


def _num(text: str) -> float:
    mult = 1000.0 if text[-1] in "kK" else 1.0
    return float(text.rstrip("kK").replace(",", "")) * mult


def parse_range_label(label: str, floor: float = 0.0) -> tuple[float, float]:
    """``(lower, upper)`` of a range-bin label; ``upper`` is ``inf`` for the open top bin."""
    for pattern, kind in _RANGE_PATTERNS:
        m = pattern.search(label)
        if not m:
            continue
        if kind == "below":
            return floor, _num(m.group(1))
        if kind == "between":
            return _num(m.group(1)), _num(m.group(2))
        return _num(m.group(1)), math.inf
    raise ContractBinMismatch(f"cannot read a bin range from label {label!r}")


def partition_from_ranges(labels: Sequence[str]) -> tuple[BinPartition, list[int]]:
    """Partition implied by range labels, plus the bin index of each label."""
    bounds = [parse_range_label(lab) for lab in labels]
    order = sorted(range(len(bounds)), key=lambda i: bounds[i][0])
    edges = [bounds[i][0] for i in order]
    for a, b in zip(order, order[1:]):
        if abs(bounds[a][1] - bounds[b][0]) > _BOUND_TOL:
            raise ContractBinMismatch(
                f"range labels are not contiguous: {labels[a]!r} then {labels[b]!r}")
    if not math.isinf(bounds[order[-1]][1]):
        raise ContractBinMismatch("no open-ended top bin among range labels")
    try:
        partition = BinPartition(tuple(edges))
    except ValueError as exc:
        raise ContractBinMismatch(str(exc)) from None
    index = [0] * len(labels)
    for bin_i, label_i in enumerate(order):
        index[label_i] = bin_i
    return partition, index


def threshold_partition(thresholds: Sequence[float]) -> BinPartition:
    """Edges ``[0, N_1, ..., N_m]``: a below-smallest bin floored at zero, then one per threshold."""
    ts = sorted(thresholds)
    if len(set(ts)) != len(ts):
        raise DuplicateThreshold(f"duplicate thresholds in {ts}")
    if ts[0] <= 0:
        raise ContractBinMismatch("thresholds must be positive to leave room for the bottom bin")
    return BinPartition((0.0, *ts))


@dataclass(frozen=True)
class ThresholdQuote:
    threshold: float
    prob: float

    def __post_init__(self):
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold!r}")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"price must lie in [0, 1], got {self.prob!r}")


def thresholds_to_distribution(quotes: Sequence[ThresholdQuote],
                               partition: BinPartition | None = None,
                               ) -> tuple[PredictiveDistribution, float]:
    """Difference adjacent "at least N" prices into bin probabilities.

    Negative differences (a higher threshold priced above a lower one) are
    clamped to zero and the result renormalised. Returns the distribution and
    the total clamped magnitude.
    """
    if not quotes:
        raise ValueError("no threshold quotes")
    ordered = sorted(quotes, key=lambda q: q.threshold)
    expected = threshold_partition([q.threshold for q in ordered])
    if partition is None:
        partition = expected
    elif partition != expected:
        raise ContractBinMismatch(f"partition {partition.edges} does not match thresholds "
                                  f"{expected.edges}")
    q = np.array([qt.prob for qt in ordered])
    raw = np.empty(q.size + 1)
    raw[0] = 1.0 - q[0]
    raw[1:-1] = q[:-1] - q[1:]
    raw[-1] = q[-1]
    clamped = np.maximum(raw, 0.0)
    violation = float(-np.minimum(raw, 0.0).sum())
    if not clamped.sum() > 0:
        raise DegenerateMass("threshold quotes leave no mass after clamping")
    return normalize(clamped, partition), violation


def range_bins_to_distribution(prices: Sequence[float],
                               partition: BinPartition) -> PredictiveDistribution:
    p = np.asarray(prices, dtype=float)
    if p.shape != (partition.n_bins,):
        raise ContractBinMismatch(f"{p.size} prices for {partition.n_bins} bins")
    if np.any((p < 0) | (p > 1)):
        raise ValueError(f"prices must lie in [0, 1]: {p.tolist()}")
    return normalize(p, partition)


@dataclass(frozen=True)
class MarketSnapshot:
    time: int
    dist: PredictiveDistribution
    raw_sum: float
    monotonicity_violation: float = 0.0


@dataclass
class Reconstruction:
    partition: BinPartition
    snapshots: list[MarketSnapshot]
    skipped: int
    bin_of_contract: list[int]


def market_partition(record: MarketRecord) -> tuple[BinPartition, list[int]]:
    labels = [c.label for c in record.contracts]
    if record.structure is Structure.RANGE_BINS:
        return partition_from_ranges(labels)
    thresholds = [parse_threshold_label(lab) for lab in labels]
    partition = threshold_partition(thresholds)
    # threshold j sits at edge index j + 1
    index = [partition.edges.index(t) for t in thresholds]
    return partition, index


def _aligned_prices(record: MarketRecord, fidelity_minutes: int) -> tuple[list[int], np.ndarray]:
    """Previous-tick prices of every contract on the union of bucketed timestamps.

    Rows where some contract has not traded yet hold NaN.
    """
    step = fidelity_minutes * 60
    bucketed = []
    for c in record.contracts:
        last_in_bucket: dict[int, float] = {}
        for t, p in c.points:
            last_in_bucket[t - t % step] = p
        bucketed.append(last_in_bucket)
    grid = sorted(set().union(*bucketed))
    prices = np.full((len(grid), len(record.contracts)), np.nan)
    for j, series in enumerate(bucketed):
        current = np.nan
        for i, g in enumerate(grid):
            current = series.get(g, current)
            prices[i, j] = current
    return grid, prices


def reconstruct(record: MarketRecord, partition: BinPartition | None = None,
                fidelity_minutes: int = DEFAULT_FIDELITY_MIN) -> Reconstruction:
    derived, index = market_partition(record)
    if partition is not None and partition != derived:
        raise ContractBinMismatch(
            f"market {record.market_id}: contracts imply edges {derived.edges}, "
            f"expected {partition.edges}")
    partition = derived
    if len(index) != len(set(index)):
        raise ContractBinMismatch(f"market {record.market_id}: two contracts map to one bin")
    expected = partition.n_bins if record.structure is Structure.RANGE_BINS else partition.n_bins - 1
    if len(index) != expected:
        raise ContractBinMismatch(
            f"market {record.market_id}: {len(index)} contracts for {expected} expected")

    grid, prices = _aligned_prices(record, fidelity_minutes)
    snapshots, skipped = [], 0
    for t, row in zip(grid, prices):
        if np.isnan(row).any():
            continue
        try:
            if record.structure is Structure.RANGE_BINS:
                ordered = np.empty(partition.n_bins)
                ordered[index] = row
                dist = range_bins_to_distribution(ordered, partition)
                snapshots.append(MarketSnapshot(t, dist, float(ordered.sum())))
            else:
                quotes = [ThresholdQuote(partition.edges[k], p) for k, p in zip(index, row)]
                dist, violation = thresholds_to_distribution(quotes, partition)
                snapshots.append(MarketSnapshot(t, dist, 1.0 + violation, violation))
        except DegenerateMass as exc:
            skipped += 1
            log.warning("market %s: skipping snapshot at %d: %s", record.market_id, t, exc)
    return Reconstruction(partition, snapshots, skipped, index)


def snapshot_series(record: MarketRecord, partition: BinPartition | None = None,
                    fidelity_minutes: int = DEFAULT_FIDELITY_MIN) -> list[MarketSnapshot]:
    return reconstruct(record, partition, fidelity_minutes).snapshots
