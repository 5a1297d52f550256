"""End-to-end evaluation: markets, surveillance, hub forecasts and the ARIMA baseline."""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from .baselines.arima import arima_forecast, fit_auto_arima
from .baselines.quantiles import (WEEK_SECONDS, HubKey, QuantileForecast, forecasts_for_target,
                                  gaussian_to_bins, incident_to_cumulative, quantiles_to_bins,
                                  read_hub_csv)
from .config import RunConfig
from .contracts import MarketSnapshot, reconstruct
from .core import BinPartition, Outcome, PredictiveDistribution
from .errors import ConfigError, DataError, FitFailure, TooShort, Unresolved
from .evaluation import (CombinationCurve, ScoreRecord, impossible_mass, optimize_alpha,
                         score_event)
from .ingest import (ApiConfig, MarketRecord, PriceHistoryClient, fetch_markets, load_fixture,
                     load_manifest, requests_transport)
from .surveillance import SurveillanceSeries, ingest_snapshots, resolve_outcome, value_as_of

log = logging.getLogger(__name__)

MARKET_MODEL = "market"
ARIMA_MODEL = "arima"


@dataclass(frozen=True)
class TimedForecast:
    time: int
    dist: PredictiveDistribution


@dataclass
class MarketEvaluation:
    market: MarketRecord
    partition: BinPartition
    outcome: Outcome
    snapshots: list[MarketSnapshot]
    skipped_snapshots: int
    hub: dict[str, list[TimedForecast]] = field(default_factory=dict)
    arima: list[TimedForecast] = field(default_factory=list)

    @property
    def market_id(self) -> str:
        return self.market.market_id

    def records(self) -> list[ScoreRecord]:
        mid = self.market_id
        out = []
        if self.snapshots:
            out.append(score_event(self.snapshots, self.outcome, MARKET_MODEL, mid))
        for model_id in sorted(self.hub):
            out.append(score_event(self.hub[model_id], self.outcome, model_id, mid))
        if self.arima:
            out.append(score_event(self.arima, self.outcome, ARIMA_MODEL, mid))
        return out


@dataclass
class EvaluationResult:
    events: list[MarketEvaluation]
    unresolved: list[str]
    hub_models: list[str]

    def records(self) -> list[ScoreRecord]:
        return [r for ev in self.events for r in ev.records()]


# ------------------------------------------------------------------ loading

def load_markets(cfg: RunConfig) -> list[MarketRecord]:
    if cfg.fixture is not None:
        records = load_fixture(cfg.fixture)
        if cfg.markets:
            wanted = set(cfg.markets)
            records = [r for r in records if r.market_id in wanted]
    else:
        records = fetch_markets(cfg.markets, cfg.cache_dir, **fetch_options(cfg))
    records = [r for r in records if r.disease.value == cfg.disease]
    if not records:
        raise DataError(f"no {cfg.disease} markets to evaluate")
    return sorted(records, key=lambda r: r.market_id)


def fetch_options(cfg: RunConfig) -> dict:
    """Keyword arguments for ``fetch_markets``; fetching needs a manifest and the API env vars."""
    if cfg.offline or cfg.manifest is None:
        return {"offline": True, "fidelity_minutes": cfg.fidelity_minutes}
    client = PriceHistoryClient(ApiConfig.from_env(), requests_transport())
    return {"offline": False, "client": client, "manifest": load_manifest(cfg.manifest),
            "fidelity_minutes": cfg.fidelity_minutes, "max_workers": cfg.workers}


def load_series(cfg: RunConfig) -> SurveillanceSeries:
    all_series = ingest_snapshots(cfg.surveillance_dir)
    try:
        return all_series[cfg.target_key]
    except KeyError:
        raise ConfigError(f"target {cfg.target_key!r} not in surveillance data "
                          f"(found {sorted(all_series)})") from None


def load_hub(cfg: RunConfig) -> dict[HubKey, QuantileForecast] | None:
    return None if cfg.hub_path is None else read_hub_csv(cfg.hub_path)


# ------------------------------------------------------------- baselines

class ArimaCache:
    """Memoised auto-ARIMA fits keyed by the exact history they were fit on."""

    def __init__(self, cfg: RunConfig):
        self._cfg = cfg.arima
        self._fits: dict[tuple[float, ...], object] = {}
        self._lock = threading.Lock()

    def fit(self, history: tuple[float, ...]):
        with self._lock:
            if history in self._fits:
                return self._fits[history]
        try:
            model = fit_auto_arima(history, self._cfg.max_p, self._cfg.max_q, self._cfg.max_d)
        except (TooShort, FitFailure) as exc:
            log.warning("ARIMA skipped for a %d-point history: %s", len(history), exc)
            model = None
        with self._lock:
            self._fits[history] = model
        return model


def arima_forecasts(series: SurveillanceSeries, partition: BinPartition, window_start: int,
                    resolution: int, cache: ArimaCache) -> list[TimedForecast]:
    """Refit at the last publication before the window and every publication inside it."""
    times = series.times
    fit_times = [t for t in times if window_start < t < resolution]
    anchor = series.latest_before(window_start)
    if anchor is not None:
        fit_times.insert(0, anchor.published)
    out = []
    for t in fit_times:
        history = tuple(s.as_of_value for s in series.snapshots if s.published <= t)
        model = cache.fit(history)
        if model is None:
            continue
        horizon = max(1, math.ceil((resolution - t) / WEEK_SECONDS))
        mean, var = arima_forecast(model, np.asarray(history), horizon)
        out.append(TimedForecast(t, gaussian_to_bins(float(mean[-1]), float(var[-1]),
                                                     partition)))
    return out


def hub_forecasts(hub: dict[HubKey, QuantileForecast], cfg: RunConfig,
                  series: SurveillanceSeries, partition: BinPartition,
                  resolution: datetime) -> dict[str, list[TimedForecast]]:
    """Hub increment forecasts landing on the resolution date, moved to the cumulative scale."""
    target_date = resolution.astimezone(timezone.utc).date().isoformat()
    out: dict[str, list[TimedForecast]] = {}
    for model_id, qfs in forecasts_for_target(hub, cfg.hub_target, target_date).items():
        dists = []
        for qf in qfs:
            last = value_as_of(series, qf.reference_time)
            if last is None:
                log.warning("%s forecast at %d predates all surveillance data; skipped",
                            model_id, qf.reference_time)
                continue
            cumulative = incident_to_cumulative(qf, last, cfg.kappa)
            dists.append(TimedForecast(qf.reference_time, quantiles_to_bins(cumulative, partition)))
        if dists:
            out[model_id] = dists
    return out


# ------------------------------------------------------------ evaluation

def evaluate_market(record: MarketRecord, cfg: RunConfig, series: SurveillanceSeries,
                    hub: dict | None, cache: ArimaCache) -> MarketEvaluation | None:
    recon = reconstruct(record, fidelity_minutes=cfg.fidelity_minutes)
    try:
        outcome = resolve_outcome(record, series, recon.partition)
    except Unresolved as exc:
        log.warning("market %s unresolved: %s", record.market_id, exc)
        return None
    ev = MarketEvaluation(record, recon.partition, outcome, recon.snapshots, recon.skipped)
    if hub:
        ev.hub = hub_forecasts(hub, cfg, series, recon.partition, record.resolution_time)
    if cfg.arima.enabled and recon.snapshots:
        ev.arima = arima_forecasts(series, recon.partition, recon.snapshots[0].time,
                                   record.resolution_ts, cache)
    return ev


def evaluate(cfg: RunConfig, markets: Sequence[MarketRecord] | None = None,
             series: SurveillanceSeries | None = None) -> EvaluationResult:
    markets = load_markets(cfg) if markets is None else list(markets)
    series = load_series(cfg) if series is None else series
    hub = load_hub(cfg)
    cache = ArimaCache(cfg)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(lambda r: evaluate_market(r, cfg, series, hub, cache), markets))
    events = [ev for ev in results if ev is not None]
    unresolved = [m.market_id for m, ev in zip(markets, results) if ev is None]
    hub_models = sorted({k.model_id for k in hub}) if hub else []
    return EvaluationResult(events, unresolved, hub_models)


def combination_events(result: EvaluationResult, ensemble: str
                       ) -> tuple[list[tuple], list[float]]:
    """Pair every market snapshot with the latest ensemble forecast issued by then.

    Each market gets total weight one, spread evenly over its pairs, so
    heavily traded markets do not dominate the mean.
    """
    events, weights = [], []
    for ev in result.events:
        ens = ev.hub.get(ensemble, [])
        if not ens:
            continue
        times = [f.time for f in ens]
        pairs = []
        for snap in ev.snapshots:
            i = int(np.searchsorted(times, snap.time, side="right")) - 1
            if i >= 0:
                pairs.append((ens[i].dist, snap.dist, ev.outcome))
        if not pairs:
            continue
        events.extend(pairs)
        weights.extend([1.0 / len(pairs)] * len(pairs))
    return events, weights


def combine(result: EvaluationResult, cfg: RunConfig,
            metrics: Sequence[str] = ("brier", "log_score", "crps")) -> CombinationCurve:
    events, weights = combination_events(result, cfg.ensemble_model)
    if not events:
        raise DataError(f"no market snapshot could be paired with a {cfg.ensemble_model!r} forecast")
    return optimize_alpha(events, list(metrics), cfg.grid_step, weights)


# ------------------------------------------------------------ diagnostics

@dataclass(frozen=True)
class ImpossibleMassPoint:
    market_id: str
    time: int
    floor: float
    mass: float


def impossible_mass_series(markets: Sequence[MarketRecord], series: SurveillanceSeries,
                           fidelity_minutes: int) -> tuple[list[ImpossibleMassPoint], list[dict]]:
    """Impossible mass per snapshot, plus a per-market monotonicity summary."""
    points, monotone = [], []
    for record in markets:
        recon = reconstruct(record, fidelity_minutes=fidelity_minutes)
        for snap in recon.snapshots:
            floor = value_as_of(series, snap.time)
            mass = impossible_mass(snap, floor)
            if mass is not None:
                points.append(ImpossibleMassPoint(record.market_id, snap.time, floor, mass))
        viol = [s.monotonicity_violation for s in recon.snapshots]
        monotone.append({
            "market_id": record.market_id,
            "structure": record.structure.value,
            "n_snapshots": len(recon.snapshots),
            "skipped_snapshots": recon.skipped,
            "n_violating": sum(1 for v in viol if v > 0),
            "max_violation": max(viol, default=0.0),
        })
    return points, monotone
