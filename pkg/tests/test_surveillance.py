from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmeval.core import make_partition
from pmeval.errors import DuplicatePublication, SchemaError, Unresolved
from pmeval.surveillance import (SurveillanceSeries, SurveillanceSnapshot, ingest_snapshots,
                                 parse_published, resolve_outcome, value_as_of)

DAY = 86400
HEADER = "target_key,published,value,source\n"


def series(pairs, key="k"):
    return SurveillanceSeries(key, tuple(SurveillanceSnapshot(t, key, v) for t, v in pairs))


class Market:
    def __init__(self, ts):
        self.resolution_ts = ts


def test_value_as_of_examples():
    s = series([(1 * DAY, 10.0), (8 * DAY, 14.0)])
    assert value_as_of(s, 5 * DAY) == 10.0
    assert value_as_of(s, 8 * DAY) == 14.0
    assert value_as_of(s, 0) is None
    assert value_as_of(s, 100 * DAY) == 14.0


def test_ingest_sorts_and_groups(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text(HEADER + "k,2026-01-15,3,x\nk,2026-01-01,1,x\nk,2026-01-08,2,x\nj,2026-01-01,9,y\n")
    out = ingest_snapshots(f)
    assert sorted(out) == ["j", "k"]
    assert [s.as_of_value for s in out["k"].snapshots] == [1, 2, 3]


def test_date_only_publications_are_noon_utc():
    noon = int(datetime(2026, 1, 1, 12, tzinfo=timezone.utc).timestamp())
    assert parse_published("2026-01-01") == noon
    assert parse_published("2026-01-01T12:00:00Z") == noon
    assert parse_published("2026-01-01T07:00:00-05:00") == noon


def test_overlapping_files_dedup_identical_rows(tmp_path):
    (tmp_path / "a.csv").write_text(HEADER + "k,2026-01-01,1,x\nk,2026-01-08,2,x\n")
    (tmp_path / "b.csv").write_text(HEADER + "k,2026-01-08,2,x\nk,2026-01-15,2.5,x\n")
    assert len(ingest_snapshots(tmp_path)["k"]) == 3


def test_conflicting_duplicates_rejected(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text(HEADER + "k,2026-01-01,1,x\nk,2026-01-01,2,x\n")
    with pytest.raises(DuplicatePublication):
        ingest_snapshots(f)


def test_revisions_may_decrease(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text(HEADER + "k,2026-01-01,5,x\nk,2026-01-08,4.5,x\n")
    assert [s.as_of_value for s in ingest_snapshots(f)["k"].snapshots] == [5, 4.5]


@pytest.mark.parametrize("body,line,field", [
    ("k,2026-13-01,1,x\n", 2, "published"),
    ("k,2026-01-01,abc,x\n", 2, "value"),
    ("k,2026-01-01,1,x\nk,2026-01-02,-3,x\n", 3, "value"),
])
def test_schema_errors(tmp_path, body, line, field):
    f = tmp_path / "a.csv"
    f.write_text(HEADER + body)
    with pytest.raises(SchemaError) as exc:
        ingest_snapshots(f)
    assert (exc.value.line, exc.value.field) == (line, field)


def test_missing_column(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("target_key,published,value\nk,2026-01-01,1\n")
    with pytest.raises(SchemaError):
        ingest_snapshots(f)


def test_resolve_outcome_examples():
    edges = make_partition([0, 2, 4, 6])
    s = series([(1 * DAY, 3.0), (8 * DAY, 6.2), (15 * DAY, 7.0)])
    out = resolve_outcome(Market(7 * DAY), s, edges)
    assert (out.value, out.bin_index) == (6.2, 3)
    s = series([(1 * DAY, 3.0), (8 * DAY, 4.0)])
    assert resolve_outcome(Market(8 * DAY), s, edges).bin_index == 2
    with pytest.raises(Unresolved):
        resolve_outcome(Market(9 * DAY), s, edges)


times_st = st.lists(st.integers(0, 10**6), min_size=1, max_size=30, unique=True).map(sorted)


@given(times_st, st.integers(-10, 2 * 10**6), st.integers(0, 10**5))
def test_value_as_of_monotone_in_time(times, t, dt):
    s = series([(t_, float(i)) for i, t_ in enumerate(times)])
    a, b = value_as_of(s, t), value_as_of(s, t + dt)
    # values encode publication order, so a later query never sees an earlier publication
    if a is not None:
        assert b is not None and b >= a
    if t >= times[-1]:
        assert a == float(len(times) - 1)
