from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmeval.contracts import (ThresholdQuote, parse_range_label, parse_threshold_label,
                              partition_from_ranges, range_bins_to_distribution, reconstruct,
                              snapshot_series, threshold_partition, thresholds_to_distribution)
from pmeval.core import make_partition
from pmeval.errors import (AmbiguousNumber, ContractBinMismatch, DegenerateMass,
                           DuplicateThreshold, NoNumber)
from pmeval.ingest import ContractPriceSeries, MarketRecord

RES = datetime(2026, 3, 1, tzinfo=timezone.utc)


@pytest.mark.parametrize("label,expected", [
    ("Will there be at least 1,500 measles cases?", 1500),
    ("2k+ cases by March 31, 2026", 2000),
    ("At least 2 500 cases by Dec 31 2025?", 2500),
    ("1.5k or more cases", 1500),
    ("Over 1,500.", 1500),
    ("Will the US report at least 3,250 measles cases by April 30, 2026?", 3250),
])
def test_parse_threshold_label(label, expected):
    assert parse_threshold_label(label) == expected


def test_parse_threshold_label_errors():
    with pytest.raises(NoNumber):
        parse_threshold_label("more cases soon?")
    with pytest.raises(AmbiguousNumber):
        parse_threshold_label("between 100 and 200 cases")


@pytest.mark.parametrize("label,bounds", [
    ("Under 2", (0.0, 2.0)),
    ("<1.5", (0.0, 1.5)),
    ("2-4", (2.0, 4.0)),
    ("2.5 to 3.5", (2.5, 3.5)),
    ("8 or more", (8.0, float("inf"))),
    ("10+", (10.0, float("inf"))),
    ("at least 1,000", (1000.0, float("inf"))),
])
def test_parse_range_label(label, bounds):
    assert parse_range_label(label) == bounds


def test_partition_from_shuffled_range_labels():
    part, index = partition_from_ranges(["4-6", "Under 2", "6 or more", "2-4"])
    assert part.edges == (0, 2, 4, 6)
    assert index == [2, 0, 3, 1]
    with pytest.raises(ContractBinMismatch):
        partition_from_ranges(["Under 2", "3-4", "4 or more"])
    with pytest.raises(ContractBinMismatch):
        partition_from_ranges(["Under 2", "2-4"])


def test_threshold_examples():
    quotes = [ThresholdQuote(100, 0.9), ThresholdQuote(200, 0.6), ThresholdQuote(300, 0.2)]
    dist, violation = thresholds_to_distribution(quotes)
    assert dist.partition.edges == (0, 100, 200, 300)
    assert dist.probs == pytest.approx([0.1, 0.3, 0.4, 0.2], abs=1e-12)
    assert violation == 0.0

    dist, violation = thresholds_to_distribution([ThresholdQuote(100, 0.5), ThresholdQuote(200, 0.6)])
    assert dist.probs == pytest.approx([0.5 / 1.1, 0.0, 0.6 / 1.1], abs=1e-12)
    assert dist.probs == pytest.approx([0.4545, 0.0, 0.5455], abs=1e-4)
    assert violation == pytest.approx(0.1, abs=1e-12)

    dist, _ = thresholds_to_distribution([ThresholdQuote(100, 1.0)])
    assert dist.probs.tolist() == [0.0, 1.0]


def test_threshold_errors():
    with pytest.raises(DuplicateThreshold):
        thresholds_to_distribution([ThresholdQuote(100, 0.5), ThresholdQuote(100, 0.4)])
    with pytest.raises(ContractBinMismatch):
        thresholds_to_distribution([ThresholdQuote(100, 0.5)], make_partition([0, 50]))
    with pytest.raises(ContractBinMismatch):
        threshold_partition([0, 10])


def test_range_bin_examples():
    p = make_partition([0, 1, 2])
    assert range_bins_to_distribution([0.1, 0.6, 0.3], p).probs == pytest.approx([0.1, 0.6, 0.3])
    assert range_bins_to_distribution([0.2, 0.9, 0.1], p).probs == pytest.approx(
        [1 / 6, 3 / 4, 1 / 12], abs=1e-12)
    with pytest.raises(DegenerateMass):
        range_bins_to_distribution([0.01, 0.01, 0.01], p)
    with pytest.raises(ContractBinMismatch):
        range_bins_to_distribution([0.5, 0.5], p)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_violation_zero_iff_monotone(qs):
    quotes = [ThresholdQuote(100.0 * (j + 1), q) for j, q in enumerate(qs)]
    dist, violation = thresholds_to_distribution(quotes)
    monotone = all(a >= b for a, b in zip(qs, qs[1:]))
    assert (violation == 0.0) == monotone
    assert abs(dist.probs.sum() - 1) <= 1e-9 and np.all(dist.probs >= 0)


def _record(contracts, structure="range_bins"):
    return MarketRecord("m", "influenza", structure, RES, tuple(contracts))


def test_snapshot_series_aligned_grid():
    a = ContractPriceSeries("a", "Under 2", ((0, 0.4), (3600, 0.3)))
    b = ContractPriceSeries("b", "2 or more", ((0, 0.6), (3600, 0.7)))
    snaps = snapshot_series(_record([a, b]))
    assert [s.time for s in snaps] == [0, 3600]
    assert snaps[1].dist.probs == pytest.approx([0.3, 0.7])


def test_snapshot_series_previous_tick():
    a = ContractPriceSeries("a", "Under 2", ((0, 0.4),))
    b = ContractPriceSeries("b", "2 or more", ((3600, 0.5),))
    snaps = snapshot_series(_record([a, b]))
    assert [s.time for s in snaps] == [3600]
    assert snaps[0].dist.probs == pytest.approx([0.4 / 0.9, 0.5 / 0.9])
    assert snaps[0].raw_sum == pytest.approx(0.9)


def test_ticks_inside_one_bucket_keep_the_last():
    a = ContractPriceSeries("a", "Under 2", ((7200, 0.1), (7300, 0.2), (9000, 0.3)))
    b = ContractPriceSeries("b", "2 or more", ((7250, 0.8),))
    snaps = snapshot_series(_record([a, b]))
    assert [s.time for s in snaps] == [7200]
    assert snaps[0].dist.probs == pytest.approx([0.3 / 1.1, 0.8 / 1.1])


def test_missing_contract_is_a_mismatch():
    a = ContractPriceSeries("a", "Under 2", ((0, 0.4),))
    b = ContractPriceSeries("b", "4 or more", ((0, 0.6),))
    with pytest.raises(ContractBinMismatch):
        snapshot_series(_record([a, b]))
    with pytest.raises(ContractBinMismatch):
        reconstruct(_record([ContractPriceSeries("a", "Under 2", ((0, 0.4),)),
                             ContractPriceSeries("b", "2 or more", ((0, 0.6),))]),
                    partition=make_partition([0, 3]))


def test_dead_snapshots_are_skipped_and_counted():
    a = ContractPriceSeries("a", "Under 2", ((0, 0.01), (3600, 0.4)))
    b = ContractPriceSeries("b", "2 or more", ((0, 0.01), (3600, 0.6)))
    recon = reconstruct(_record([a, b]))
    assert recon.skipped == 1
    assert [s.time for s in recon.snapshots] == [3600]


def test_threshold_market_reconstruction():
    labels = ["Will there be at least 200 cases by May 31, 2026?",
              "Will there be at least 100 cases by May 31, 2026?"]
    c200 = ContractPriceSeries("x", labels[0], ((0, 0.3), (3600, 0.6)))
    c100 = ContractPriceSeries("y", labels[1], ((0, 0.8), (3600, 0.5)))
    recon = reconstruct(_record([c200, c100], "thresholds"))
    assert recon.partition.edges == (0, 100, 200)
    s0, s1 = recon.snapshots
    assert s0.dist.probs == pytest.approx([0.2, 0.5, 0.3])
    assert s0.monotonicity_violation == 0.0
    assert s1.monotonicity_violation == pytest.approx(0.1)
    assert s1.dist.probs == pytest.approx([0.5 / 1.1, 0.0, 0.6 / 1.1])
