"""Scoring rules over bins, aggregation, combination search and market diagnostics."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import BinPartition, Outcome, PredictiveDistribution, cdf
from .errors import EmptyEvents, EmptyHub, EmptySnapshots, IndexOutOfRange

LOG_EPS = 1e-10
SCORE_TOL = 1e-9
METRICS = ("brier", "log_score", "crps")
CRPS_CONVENTION = ("sum over bounded bins of (F_i - 1{y <= i})^2 * width_i; "
                   "the open top bin contributes zero")


def _check_index(p: PredictiveDistribution, y: int) -> None:
    if not 0 <= y < p.probs.size:
        raise IndexOutOfRange(f"outcome bin {y} outside 0..{p.probs.size - 1}")


def brier(p: PredictiveDistribution, y: int) -> float:
    _check_index(p, y)
    diff = p.probs.copy()
    diff[y] -= 1.0
    return float(diff @ diff)


def log_score(p: PredictiveDistribution, y: int) -> float:
    """Negative natural log of the probability on the realised bin, clamped at ``LOG_EPS``."""
    _check_index(p, y)
    return -math.log(max(float(p.probs[y]), LOG_EPS))


def crps_binned(p: PredictiveDistribution, y: int) -> float:
    _check_index(p, y)
    F = cdf(p)[:-1]
    H = (np.arange(F.size) >= y).astype(float)
    return float(((F - H) ** 2) @ p.partition.widths())


SCORERS: dict[str, Callable[[PredictiveDistribution, int], float]] = {
    "brier": brier,
    "log_score": log_score,
    "crps": crps_binned,
}


def _batch_brier(Q: np.ndarray, ys: np.ndarray, part: BinPartition) -> np.ndarray:
    D = Q.copy()
    D[np.arange(len(ys)), ys] -= 1.0
    return np.einsum("ij,ij->i", D, D)


def _batch_log(Q: np.ndarray, ys: np.ndarray, part: BinPartition) -> np.ndarray:
    return -np.log(np.maximum(Q[np.arange(len(ys)), ys], LOG_EPS))


def _batch_crps(Q: np.ndarray, ys: np.ndarray, part: BinPartition) -> np.ndarray:
    F = np.minimum(np.cumsum(Q, axis=1)[:, :-1], 1.0)
    H = (np.arange(F.shape[1])[None, :] >= ys[:, None]).astype(float)
    return ((F - H) ** 2) @ part.widths()


# row-wise versions of the scoring rules, used by the alpha search
_BATCH = {"brier": _batch_brier, "log_score": _batch_log, "crps": _batch_crps}


def _metric_fn(metric: str) -> Callable[[PredictiveDistribution, int], float]:
    try:
        return SCORERS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(SCORERS)}") from None


@dataclass(frozen=True)
class ScoreRecord:
    event_id: str
    model_id: str
    brier: float
    log_score: float
    crps: float
    n_snapshots: int

    def __post_init__(self):
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be >= 1")
        for name in METRICS:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")

    def get(self, metric: str) -> float:
        return getattr(self, metric)


def _as_dist(item) -> PredictiveDistribution:
    return item if isinstance(item, PredictiveDistribution) else item.dist


def score_event(snapshots: Sequence, outcome: Outcome | int, model_id: str,
                event_id: str = "") -> ScoreRecord:
    """Unweighted mean of each score over all snapshots, against one fixed outcome.

    ``snapshots`` may hold ``PredictiveDistribution`` objects or anything with
    a ``dist`` attribute (market snapshots).
    """
    if not snapshots:
        raise EmptySnapshots(f"no snapshots to score for {model_id!r} on {event_id!r}")
    y = outcome.bin_index if isinstance(outcome, Outcome) else int(outcome)
    dists = [_as_dist(s) for s in snapshots]
    means = {m: math.fsum(SCORERS[m](d, y) for d in dists) / len(dists) for m in METRICS}
    return ScoreRecord(event_id=event_id, model_id=model_id, n_snapshots=len(dists), **means)


def mean_over_events(records: Iterable[ScoreRecord]) -> dict[str, dict[str, float]]:
    """Per-model mean of each metric across events (one record per event)."""
    grouped: dict[str, list[ScoreRecord]] = defaultdict(list)
    for r in records:
        grouped[r.model_id].append(r)
    out = {}
    for model_id, rs in grouped.items():
        out[model_id] = {m: math.fsum(r.get(m) for r in rs) / len(rs) for m in METRICS}
        out[model_id]["n_events"] = len(rs)
    return out


def percentile_rank(candidate_mean: float, hub_means: Sequence[float], strict: bool = True) -> float:
    """Percent of hub models the candidate beats (lower score is better).

    ``strict`` counts only models with a strictly worse mean; otherwise ties
    count as beaten too.
    """
    if len(hub_means) == 0:
        raise EmptyHub("no hub models to rank against")
    if strict:
        beaten = sum(1 for m in hub_means if m > candidate_mean)
    else:
        beaten = sum(1 for m in hub_means if m >= candidate_mean)
    return 100.0 * beaten / len(hub_means)


@dataclass(frozen=True, eq=False)
class CombinationCurve:
    alphas: np.ndarray
    scores: dict[str, np.ndarray] = field(default_factory=dict)
    alpha_star: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        a = self.alphas
        if a.size < 2 or a[0] != 0.0 or a[-1] != 1.0 or np.any(np.diff(a) <= 0):
            raise ValueError("alpha grid must be strictly increasing from 0 to 1")


def alpha_grid(step: float = 0.01) -> np.ndarray:
    n = round(1.0 / step)
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"grid step {step!r} does not divide 1 evenly")
    return np.arange(n + 1) / n


def optimize_alpha(events: Sequence[tuple], metric: str | Sequence[str] = "brier",
                   grid_step: float = 0.01,
                   weights: Sequence[float] | None = None) -> CombinationCurve:
    """Grid search for the weight on ``p_a`` in ``alpha * p_a + (1 - alpha) * p_b``.

    ``events`` holds ``(p_a, p_b, y)`` triples. ``weights`` turns the plain
    mean over events into a weighted one. Ties within ``SCORE_TOL`` resolve to
    the larger alpha.
    """
    if not events:
        raise EmptyEvents("no events to combine")
    metrics = [metric] if isinstance(metric, str) else list(metric)
    for m in metrics:
        _metric_fn(m)
    w = np.ones(len(events)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(events),) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative, one per event, not all zero")
    alphas = alpha_grid(grid_step)

    # group events by partition so each alpha is scored with array arithmetic
    groups: dict[BinPartition, list] = defaultdict(list)
    for (p_a, p_b, y), wi in zip(events, w):
        if p_a.partition != p_b.partition:
            raise ValueError("paired forecasts must share a partition")
        y = y.bin_index if isinstance(y, Outcome) else int(y)
        _check_index(p_a, y)
        groups[p_a.partition].append((p_a.probs, p_b.probs, y, wi))
    batches = []
    for part, items in groups.items():
        A = np.stack([it[0] for it in items])
        B = np.stack([it[1] for it in items])
        ys = np.array([it[2] for it in items])
        ws = np.array([it[3] for it in items])
        batches.append((part, A, B, ys, ws))

    scores = {m: np.empty(alphas.size) for m in metrics}
    total_w = math.fsum(w)
    for k, alpha in enumerate(alphas):
        parts = {m: [] for m in metrics}
        for part, A, B, ys, ws in batches:
            Q = np.clip(alpha * A + (1.0 - alpha) * B, 0.0, 1.0)
            for m in metrics:
                parts[m].append(ws * _BATCH[m](Q, ys, part))
        for m in metrics:
            scores[m][k] = math.fsum(np.concatenate(parts[m]).tolist()) / total_w

    alpha_star = {}
    for m in metrics:
        best = scores[m].min()
        candidates = np.flatnonzero(scores[m] <= best + SCORE_TOL)
        alpha_star[m] = float(alphas[candidates[-1]])
    return CombinationCurve(alphas=alphas, scores=scores, alpha_star=alpha_star)


def impossible_mass(snapshot, known_floor: float | None,
                    partition: BinPartition | None = None) -> float | None:
    """Probability on bins lying wholly below the latest observed cumulative value.

    Returns None when no observation was available (``known_floor`` is None).
    The bin containing the floor is not counted.
    """
    if known_floor is None:
        return None
    dist = _as_dist(snapshot)
    part = dist.partition
    if partition is not None and partition != part:
        raise ValueError("partition does not match the snapshot's distribution")
    upper = np.asarray(part.edges[1:])
    below = np.flatnonzero(upper <= known_floor)
    return math.fsum(dist.probs[below].tolist())


@dataclass
class VolumeSummary:
    per_market: dict[str, float]
    per_week: dict[str, float]
    total: float
    missing: list[str]

    @property
    def coverage(self) -> float:
        n = len(self.per_market) + len(self.missing)
        return len(self.per_market) / n if n else 0.0


def iso_week(ts: float) -> str:
    year, week, _ = datetime.fromtimestamp(ts, tz=timezone.utc).isocalendar()
    return f"{year}-W{week:02d}"


def volume_summary(records: Sequence) -> VolumeSummary:
    """Total traded notional per market and per ISO week, from cumulative volume series."""
    per_market: dict[str, float] = {}
    weekly: dict[str, list[float]] = defaultdict(list)
    missing = []
    for rec in records:
        points = sorted(rec.volume or [])
        if not points:
            missing.append(rec.market_id)
            continue
        per_market[rec.market_id] = float(points[-1][1])
        prev = 0.0
        for t, cum in points:
            weekly[iso_week(t)].append(cum - prev)
            prev = cum
    per_week = {k: math.fsum(v) for k, v in sorted(weekly.items())}
    return VolumeSummary(per_market=per_market, per_week=per_week,
                         total=math.fsum(per_market.values()), missing=missing)


def metadata_block(**extra) -> Mapping[str, object]:
    meta = {
        "log_clamp_eps": LOG_EPS,
        "log_base": "natural",
        "crps_convention": CRPS_CONVENTION,
        "percentile_convention": "percent of hub models with a strictly worse mean (strict); "
                                 "worse-or-equal (weak)",
        "alpha_tie_break": "larger alpha",
    }
    meta.update(extra)
    return meta
