"""Vintage store for published cumulative surveillance values.

Every publication is kept, so a question like "what was known at time t" is
answered from the data as it stood then, not as later revised.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from datetime import date, datetime, time, timezone
from pathlib import Path

from .core import BinPartition, Outcome, make_outcome
from .errors import DuplicatePublication, SchemaError, Unresolved

COLUMNS = ("target_key", "published", "value", "source")
# publication dates without a time of day are pinned to noon UTC
DATE_ONLY_HOUR = 12


@dataclass(frozen=True)
class SurveillanceSnapshot:
    published: int
    target_key: str
    as_of_value: float
    source: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.as_of_value) and self.as_of_value >= 0):
            raise ValueError(f"as_of_value must be finite and >= 0, got {self.as_of_value!r}")


@dataclass(frozen=True)
class SurveillanceSeries:
    target_key: str
    snapshots: tuple[SurveillanceSnapshot, ...]

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        for a, b in zip(snaps, snaps[1:]):
            if not b.published > a.published:
                raise DuplicatePublication(
                    f"{self.target_key}: publications not strictly increasing at {b.published}")
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "_times", [s.published for s in snaps])

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def times(self) -> list[int]:
        return list(self._times)

    def latest_before(self, t: float) -> SurveillanceSnapshot | None:
        i = bisect.bisect_right(self._times, t)
        return self.snapshots[i - 1] if i else None

    def first_at_or_after(self, t: float) -> SurveillanceSnapshot | None:
        i = bisect.bisect_left(self._times, t)
        return self.snapshots[i] if i < len(self.snapshots) else None


def parse_published(text: str) -> int:
    """Unix seconds for an RFC 3339 timestamp or a bare ``YYYY-MM-DD`` date."""
    text = text.strip()
    if len(text) == 10:
        d = date.fromisoformat(text)
        dt = datetime.combine(d, time(DATE_ONLY_HOUR), tzinfo=timezone.utc)
    else:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00").replace("z", "+00:00"))
        if dt.tzinfo is None:
            raise ValueError(f"timestamp {text!r} has no UTC offset")
    return int(dt.timestamp())


def _read_rows(path: Path) -> list[SurveillanceSnapshot]:
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"missing columns {missing}", source=str(path), line=1,
                              field=missing[0])
        for row in reader:
            line = reader.line_num
            key = (row["target_key"] or "").strip()
            if not key:
                raise SchemaError("empty target_key", source=str(path), line=line,
                                  field="target_key")
            try:
                published = parse_published(row["published"] or "")
            except ValueError as exc:
                raise SchemaError(str(exc), source=str(path), line=line,
                                  field="published") from None
            try:
                snap = SurveillanceSnapshot(published, key, float(row["value"]),
                                            (row["source"] or "").strip())
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"bad value: {exc}", source=str(path), line=line,
                                  field="value") from None
            rows.append(snap)
    return rows


def ingest_snapshots(path: str | Path) -> dict[str, SurveillanceSeries]:
    """Read one CSV file or every ``*.csv`` under a directory into per-target series.

    Files may overlap: a repeated (target, published) pair with the same
    value is kept once, a conflicting value raises ``DuplicatePublication``.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(path.rglob("*.csv"))
    elif path.is_file():
        files = [path]
    else:
        raise FileNotFoundError(f"no surveillance data at {path}")

    seen: dict[tuple[str, int], SurveillanceSnapshot] = {}
    for f in files:
        for snap in _read_rows(f):
            k = (snap.target_key, snap.published)
            prior = seen.get(k)
            if prior is None:
                seen[k] = snap
            elif prior.as_of_value != snap.as_of_value:
                raise DuplicatePublication(
                    f"{snap.target_key} published {snap.published} twice with values "
                    f"{prior.as_of_value} and {snap.as_of_value} ({f})")

    grouped: dict[str, list[SurveillanceSnapshot]] = {}
    for (key, _), snap in sorted(seen.items()):
        grouped.setdefault(key, []).append(snap)
    return {key: SurveillanceSeries(key, tuple(snaps)) for key, snaps in grouped.items()}


def value_as_of(series: SurveillanceSeries, t: float) -> float | None:
    """Value of the latest publication at or before ``t``; None before the first one."""
    snap = series.latest_before(t)
    return None if snap is None else snap.as_of_value


def settlement_value(series: SurveillanceSeries, resolution_time: float) -> float:
    snap = series.first_at_or_after(resolution_time)
    if snap is None:
        raise Unresolved(f"{series.target_key}: nothing published at or after {resolution_time}")
    return snap.as_of_value


def resolve_outcome(market, series: SurveillanceSeries, partition: BinPartition) -> Outcome:
    """Settle a market on the first publication at or after its resolution time."""
    when = market.resolution_ts if hasattr(market, "resolution_ts") else float(market)
    return make_outcome(settlement_value(series, when), partition)
