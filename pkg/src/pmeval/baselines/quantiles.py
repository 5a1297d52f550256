"""Hub-style quantile forecasts and their discretisation onto market bins."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date, datetime, time, timezone
from pathlib import Path

import numpy as np
from scipy.stats import norm

from ..core import BinPartition, PredictiveDistribution
from ..errors import SchemaError

log = logging.getLogger(__name__)

HUB_COLUMNS = ("reference_date", "target", "horizon", "output_type", "output_type_id", "value",
               "model_id")
WEEK_SECONDS = 7 * 86400


@dataclass(frozen=True, eq=False)
class QuantileForecast:
    levels: np.ndarray
    values: np.ndarray
    reference_time: int = 0
    horizon_weeks: int = 0

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        values = np.array(self.values, dtype=float)
        if levels.ndim != 1 or levels.shape != values.shape or levels.size < 2:
            raise ValueError("levels and values need the same length, at least 2")
        if not (np.all(np.isfinite(levels)) and np.all(np.isfinite(values))):
            raise ValueError("levels and values must be finite")
        if levels[0] <= 0 or levels[-1] >= 1 or np.any(np.diff(levels) <= 0):
            raise ValueError(f"levels must increase strictly inside (0, 1): {levels.tolist()}")
        if np.any(np.diff(values) < 0):
            raise ValueError(f"quantile values must be non-decreasing: {values.tolist()}")
        levels.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)

    @property
    def target_time(self) -> int:
        return self.reference_time + self.horizon_weeks * WEEK_SECONDS


def incident_to_cumulative(incident: QuantileForecast, last_cumulative: float,
                           kappa: float = 1.0) -> QuantileForecast:
    """Shift and scale an increment forecast onto the cumulative scale.

    An affine map with positive slope moves quantiles exactly, so the levels
    are untouched.
    """
    if not last_cumulative >= 0:
        raise ValueError(f"last_cumulative must be >= 0, got {last_cumulative!r}")
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa!r}")
    return QuantileForecast(incident.levels, last_cumulative + kappa * incident.values,
                            incident.reference_time, incident.horizon_weeks)


def cdf_left_limit(qf: QuantileForecast, x) -> np.ndarray:
    """Left limit ``F(x-)`` of the piecewise-linear CDF with tail atoms.

    The CDF jumps by ``levels[0]`` at ``values[0]``, by ``1 - levels[-1]`` at
    ``values[-1]``, and at any repeated value; it is linear in between.
    """
    v, lv = qf.values, qf.levels
    x = np.asarray(x, dtype=float)
    j = np.searchsorted(v, x, side="left")
    out = np.where(j >= v.size, 1.0, 0.0)
    inner = (j > 0) & (j < v.size)
    if np.any(inner):
        jj = j[inner]
        x0, x1 = v[jj - 1], v[jj]
        f0, f1 = lv[jj - 1], lv[jj]
        out[inner] = f0 + (f1 - f0) * (x[inner] - x0) / (x1 - x0)
    return out


def quantiles_to_bins(qf: QuantileForecast, partition: BinPartition) -> PredictiveDistribution:
    """Bin masses of the piecewise-linear quantile CDF.

    Each bin ``[a, b)`` gets ``F(b-) - F(a-)``, so a jump sitting exactly on
    an edge lands in the higher bin. Mass below the first edge is folded into
    bin 0.
    """
    edges = np.asarray(partition.edges)
    F = cdf_left_limit(qf, edges[1:])
    bounds = np.concatenate(([0.0], F, [1.0]))
    mass = np.maximum(np.diff(bounds), 0.0)
    return PredictiveDistribution(partition, mass / mass.sum())


def gaussian_to_bins(mean: float, variance: float,
                     partition: BinPartition) -> PredictiveDistribution:
    """Normal forecast discretised onto bins; mass below the first edge folds into bin 0."""
    if not (variance > 0 and math.isfinite(variance)):
        raise ValueError(f"variance must be positive and finite, got {variance!r}")
    if not math.isfinite(mean):
        raise ValueError(f"mean must be finite, got {mean!r}")
    z = (np.asarray(partition.edges[1:]) - mean) / math.sqrt(variance)
    lower = norm.cdf(z)
    upper = norm.sf(z)
    K = partition.n_bins
    mass = np.empty(K)
    # take differences on whichever side of the mean keeps precision
    for i in range(K):
        lo_idx, hi_idx = i - 1, i
        if i == 0:
            mass[i] = lower[0] if K > 1 else 1.0
        elif i == K - 1:
            mass[i] = upper[-1]
        elif z[lo_idx] >= 0:
            mass[i] = upper[lo_idx] - upper[hi_idx]
        else:
            mass[i] = lower[hi_idx] - lower[lo_idx]
    mass = np.maximum(mass, 0.0)
    return PredictiveDistribution(partition, mass / mass.sum())


@dataclass(frozen=True)
class HubKey:
    model_id: str
    target: str
    reference_date: str
    horizon: int


def reference_timestamp(day: str) -> int:
    """Midnight UTC of a hub ``reference_date``."""
    d = date.fromisoformat(day)
    return int(datetime.combine(d, time(0), tzinfo=timezone.utc).timestamp())


def read_hub_csv(path: str | Path) -> dict[HubKey, QuantileForecast]:
    """Quantile rows of a long-format hub file, one forecast per (model, target, date, horizon)."""
    path = Path(path)
    files = sorted(path.rglob("*.csv")) if path.is_dir() else [path]
    groups: dict[HubKey, dict[float, float]] = {}
    for f in files:
        with f.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in HUB_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise SchemaError(f"missing columns {missing}", source=str(f), line=1,
                                  field=missing[0])
            for row in reader:
                if row["output_type"].strip() != "quantile":
                    continue
                line = reader.line_num
                try:
                    key = HubKey(row["model_id"].strip(), row["target"].strip(),
                                 date.fromisoformat(row["reference_date"].strip()).isoformat(),
                                 int(row["horizon"]))
                except ValueError as exc:
                    raise SchemaError(str(exc), source=str(f), line=line,
                                      field="reference_date/horizon") from None
                try:
                    level, value = float(row["output_type_id"]), float(row["value"])
                except ValueError as exc:
                    raise SchemaError(str(exc), source=str(f), line=line,
                                      field="output_type_id/value") from None
                levels = groups.setdefault(key, {})
                if level in levels and levels[level] != value:
                    raise SchemaError(f"conflicting values for level {level}", source=str(f),
                                      line=line, field="value")
                levels[level] = value

    out = {}
    for key in sorted(groups, key=lambda k: (k.model_id, k.target, k.reference_date, k.horizon)):
        levels = sorted(groups[key])
        values = [groups[key][lv] for lv in levels]
        try:
            out[key] = QuantileForecast(levels, values, reference_timestamp(key.reference_date),
                                        key.horizon)
        except ValueError as exc:
            log.warning("dropping hub forecast %s: %s", key, exc)
    return out


def forecasts_for_target(forecasts: dict[HubKey, QuantileForecast], target: str,
                         target_date: str) -> dict[str, list[QuantileForecast]]:
    """Per model, every forecast of ``target`` whose horizon lands on ``target_date``."""
    end = reference_timestamp(target_date)
    out: dict[str, list[QuantileForecast]] = {}
    for key, qf in forecasts.items():
        if key.target == target and qf.target_time == end:
            out.setdefault(key.model_id, []).append(qf)
    for qfs in out.values():
        qfs.sort(key=lambda q: q.reference_time)
    return out

