"""Command-line entry point: ``pmeval {evaluate,combine,diagnose,report,fetch}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, PmevalError
from .evaluation import METRICS, mean_over_events, metadata_block, percentile_rank, volume_summary
from .figures import alpha_curves, impossible_mass_plot, score_histogram
from .ingest import PRICE_FIELD, cache_path, format_time, load_or_fetch
from .outputs import StagedOutput, update_metadata
from .pipeline import (ARIMA_MODEL, MARKET_MODEL, combine, evaluate, fetch_options,
                       impossible_mass_series, load_markets, load_series)
from .report import (COMBINATION_HEADER, EVENT_HEADER, IMPOSSIBLE_HEADER, MONOTONE_HEADER,
                     OPTIMUM_HEADER, PERCENTILE_HEADER, SUMMARY_HEADER, VOLUME_MARKET_HEADER,
                     VOLUME_WEEK_HEADER, build_report)
from .surveillance import DATE_ONLY_HOUR

log = logging.getLogger("pmeval")


def _common_metadata(cfg: RunConfig) -> dict:
    return {
        "version": __version__,
        "conventions": dict(metadata_block(
            fidelity_minutes=cfg.fidelity_minutes,
            kappa=cfg.kappa,
            seed=cfg.seed,
            price_field=PRICE_FIELD,
            date_only_publications=f"{DATE_ONLY_HOUR:02d}:00 UTC",
            grid_step=cfg.grid_step,
        )),
        "config": cfg.describe(),
    }


def _datetime_text(ts: int) -> str:
    return format_time(datetime.fromtimestamp(ts, tz=timezone.utc))


# ----------------------------------------------------------------- commands

def cmd_evaluate(cfg: RunConfig) -> Path:
    cfg.validate()
    result = evaluate(cfg)
    records = result.records()
    outcomes = {ev.market_id: ev.outcome for ev in result.events}
    means = mean_over_events(records)

    hub = {m: v for m, v in means.items() if m in result.hub_models}
    pct_rows = []
    for candidate in (MARKET_MODEL, ARIMA_MODEL):
        if candidate not in means or not hub:
            continue
        for metric in METRICS:
            others = [v[metric] for v in hub.values()]
            c = means[candidate][metric]
            pct_rows.append((candidate, metric, c, len(others),
                             percentile_rank(c, others, strict=True),
                             percentile_rank(c, others, strict=False)))

    with StagedOutput(cfg.output_dir) as stage:
        stage.write_csv("scores_events.csv", EVENT_HEADER, (
            (r.event_id, r.model_id, r.n_snapshots, r.brier, r.log_score, r.crps,
             outcomes[r.event_id].value, outcomes[r.event_id].bin_index)
            for r in sorted(records, key=lambda r: (r.event_id, r.model_id))))
        stage.write_csv("scores_summary.csv", SUMMARY_HEADER, (
            (m, v["n_events"], v["brier"], v["log_score"], v["crps"])
            for m, v in sorted(means.items())))
        if pct_rows:
            stage.write_csv("percentiles.csv", PERCENTILE_HEADER, pct_rows)
        markers = {m: v for m, v in means.items()
                   if m in (MARKET_MODEL, ARIMA_MODEL, cfg.ensemble_model)}
        stage.write_text("score_histogram.svg", score_histogram(
            {m: v for m, v in hub.items() if m != cfg.ensemble_model}, markers, METRICS))
        update_metadata(stage, "evaluate", {
            "n_markets": len(result.events) + len(result.unresolved),
            "n_resolved": len(result.events),
            "unresolved": result.unresolved,
            "hub_models": result.hub_models,
            "skipped_snapshots": {ev.market_id: ev.skipped_snapshots for ev in result.events
                                  if ev.skipped_snapshots},
        }, _common_metadata(cfg))
    return cfg.output_dir


def cmd_combine(cfg: RunConfig) -> Path:
    cfg.validate()
    if cfg.hub_path is None:
        raise ConfigError("combine needs hub forecasts (hub_path)")
    result = evaluate(replace(cfg, arima=replace(cfg.arima, enabled=False)))
    curve = combine(result, cfg)
    metrics = list(curve.scores)

    with StagedOutput(cfg.output_dir) as stage:
        stage.write_csv("combination.csv", COMBINATION_HEADER, (
            (float(a), *(float(curve.scores[m][k]) for m in metrics))
            for k, a in enumerate(curve.alphas)))
        rows = []
        for m in metrics:
            k = int(round(curve.alpha_star[m] / cfg.grid_step))
            rows.append((m, curve.alpha_star[m], float(curve.scores[m][k]),
                         float(curve.scores[m][0]), float(curve.scores[m][-1])))
        stage.write_csv("combination_optimum.csv", OPTIMUM_HEADER, rows)
        stage.write_text("alpha_curves.svg", alpha_curves(
            curve.alphas, curve.scores, curve.alpha_star, cfg.ensemble_model))
        update_metadata(stage, "combine", {
            "alpha_star": curve.alpha_star,
            "components": {"alpha": cfg.ensemble_model, "one_minus_alpha": MARKET_MODEL},
            "event_weighting": "each market weighs one, split evenly over its snapshot pairs",
        }, _common_metadata(cfg))
    return cfg.output_dir


def cmd_diagnose(cfg: RunConfig) -> Path:
    cfg.validate()
    markets = load_markets(cfg)
    series = load_series(cfg)
    points, monotone = impossible_mass_series(markets, series, cfg.fidelity_minutes)
    volume = volume_summary(markets)

    with StagedOutput(cfg.output_dir) as stage:
        stage.write_csv("impossible_mass.csv", IMPOSSIBLE_HEADER, (
            (p.market_id, _datetime_text(p.time), p.floor, p.mass) for p in points))
        stage.write_csv("monotonicity.csv", MONOTONE_HEADER, (
            tuple(row[c] for c in MONOTONE_HEADER) for row in monotone))
        vol_rows = [(m, t, "ok") for m, t in sorted(volume.per_market.items())]
        vol_rows += [(m, None, "missing") for m in sorted(volume.missing)]
        stage.write_csv("volume_markets.csv", VOLUME_MARKET_HEADER, vol_rows)
        stage.write_csv("volume_weekly.csv", VOLUME_WEEK_HEADER, volume.per_week.items())
        stage.write_text("impossible_mass.svg", impossible_mass_plot(points))
        update_metadata(stage, "diagnose", {
            "volume_total_usd": volume.total,
            "volume_coverage": volume.coverage,
            "impossible_mass_rule": "bins whose upper edge is at or below the latest "
                                    "published value at snapshot time",
        }, _common_metadata(cfg))
    return cfg.output_dir


def cmd_report(cfg: RunConfig) -> Path:
    text = build_report(cfg.output_dir)
    with StagedOutput(cfg.output_dir) as stage:
        stage.write_text("report.html", text)
    return cfg.output_dir / "report.html"


def cmd_fetch(cfg: RunConfig) -> list[Path]:
    if not cfg.markets:
        raise ConfigError("fetch needs market ids (config 'markets' or --market)")
    if cfg.offline:
        raise ConfigError("fetch cannot run with --offline")
    if cfg.manifest is None:
        raise ConfigError("fetch needs a market manifest (config 'manifest' or --manifest)")
    opts = fetch_options(cfg)
    paths = []
    for market_id in cfg.markets:
        load_or_fetch(market_id, cfg.cache_dir, **opts)
        paths.append(cache_path(cfg.cache_dir, market_id))
    return paths


COMMANDS = {
    "evaluate": cmd_evaluate,
    "combine": cmd_combine,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
    "fetch": cmd_fetch,
}


# ---------------------------------------------------------------- argparse

class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the verb from being reset by the subparser
    p = argparse.ArgumentParser(add_help=False)
    s = argparse.SUPPRESS
    p.add_argument("--config", type=Path, default=s, help="TOML or JSON run configuration")
    p.add_argument("--offline", action="store_true", default=s,
                   help="never touch the network; use fixtures or the cache")
    p.add_argument("--output", type=Path, default=s, help="output directory")
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("--workers", type=int, default=s, help="markets processed in parallel")
    p.add_argument("--cache-dir", type=Path, default=s)
    p.add_argument("--fidelity-min", type=int, default=s, help="price grid in minutes")
    p.add_argument("-v", "--verbose", action="count", default=s)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="pmeval", parents=[common],
                     description="Score prediction-market forecasts against hub and "
                                 "statistical baselines.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("evaluate", parents=[common], help="score markets, hub models and ARIMA")
    sub.add_parser("combine", parents=[common], help="search the ensemble/market weight")
    sub.add_parser("diagnose", parents=[common],
                   help="impossible mass, volume and monotonicity checks")
    sub.add_parser("report", parents=[common], help="assemble report.html from prior outputs")
    fetch = sub.add_parser("fetch", parents=[common], help="populate the price cache")
    fetch.add_argument("--market", action="append", dest="markets", default=argparse.SUPPRESS,
                       help="market id to fetch (repeatable)")
    fetch.add_argument("--manifest", type=Path, default=argparse.SUPPRESS)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "offline": "offline", "output": "output_dir", "seed": "seed", "workers": "workers",
        "cache_dir": "cache_dir", "fidelity_min": "fidelity_minutes", "markets": "markets",
        "manifest": "manifest",
    }
    changes = {dest: getattr(args, flag) for flag, dest in overrides.items() if hasattr(args, flag)}
    return replace(cfg, **changes)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    verbosity = getattr(args, "verbose", 0) or 0
    logging.basicConfig(level=logging.WARNING - 10 * min(verbosity, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        result = COMMANDS[args.command](cfg)
    except PmevalError as exc:
        print(f"pmeval: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"pmeval: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    if isinstance(result, list):
        for p in result:
            print(p)
    else:
        print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
