"""Self-contained HTML report assembled from command outputs."""

from __future__ import annotations

import html
import json
from pathlib import Path

from .errors import MissingArtifacts
from .outputs import read_table

EVENT_HEADER = ("event_id", "model_id", "n_snapshots", "brier", "log_score", "crps",
                "outcome_value", "outcome_bin")
SUMMARY_HEADER = ("model_id", "n_events", "brier", "log_score", "crps")
PERCENTILE_HEADER = ("candidate", "metric", "candidate_mean", "n_hub_models",
                     "percentile_strict", "percentile_weak")
COMBINATION_HEADER = ("alpha", "brier", "log_score", "crps")
OPTIMUM_HEADER = ("metric", "alpha_star", "score_at_alpha_star", "score_at_0", "score_at_1")
IMPOSSIBLE_HEADER = ("market_id", "time", "floor", "impossible_mass")
MONOTONE_HEADER = ("market_id", "structure", "n_snapshots", "skipped_snapshots", "n_violating",
                   "max_violation")
VOLUME_MARKET_HEADER = ("market_id", "total_usd", "status")
VOLUME_WEEK_HEADER = ("iso_week", "volume_usd")

REQUIRED = ("scores_events.csv", "scores_summary.csv", "metadata.json")
SECTIONS = {
    "combination": ("combination.csv", "combination_optimum.csv", "alpha_curves.svg"),
    "diagnostics": ("impossible_mass.csv", "monotonicity.csv", "volume_markets.csv",
                    "volume_weekly.csv", "impossible_mass.svg"),
}

_CSS = """
body { font-family: sans-serif; max-width: 1100px; margin: 2em auto; color: #222; }
table { border-collapse: collapse; margin: 0.5em 0 1.5em; font-size: 0.9em; }
th, td { border: 1px solid #ccc; padding: 3px 8px; text-align: right; }
th { background: #eef1f6; }
td:first-child, th:first-child { text-align: left; }
.placeholder { color: #777; font-style: italic; border: 1px dashed #bbb; padding: 1em; }
pre { background: #f6f6f6; padding: 1em; overflow-x: auto; font-size: 0.8em; }
"""


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return html.escape("" if v is None else str(v))


def _table(rows: list[dict], columns) -> str:
    head = "".join(f"<th>{html.escape(c)}</th>" for c in columns)
    body = "".join("<tr>" + "".join(f"<td>{_cell(r[c])}</td>" for c in columns) + "</tr>"
                   for r in rows)
    return f"<table><thead><tr>{head}</tr></thead><tbody>{body}</tbody></table>"


def _svg_inline(path: Path) -> str:
    text = path.read_text(encoding="utf-8")
    # drop the XML prolog and doctype so the SVG can sit inside HTML
    start = text.find("<svg")
    return text[start:] if start >= 0 else ""


def _placeholder(what: str, command: str) -> str:
    return (f'<p class="placeholder">{html.escape(what)} not available: run '
            f'<code>pmeval {command}</code> first.</p>')


def build_report(output_dir: str | Path) -> str:
    out = Path(output_dir)
    missing = [name for name in REQUIRED if not (out / name).exists()]
    if missing:
        raise MissingArtifacts(missing)

    summary = read_table(out / "scores_summary.csv", SUMMARY_HEADER,
                         ("n_events", "brier", "log_score", "crps"))
    events = read_table(out / "scores_events.csv", EVENT_HEADER,
                        ("n_snapshots", "brier", "log_score", "crps", "outcome_value",
                         "outcome_bin"))
    meta = json.loads((out / "metadata.json").read_text(encoding="utf-8"))

    parts = [f"<!DOCTYPE html><html><head><meta charset='utf-8'><title>Forecast evaluation"
             f"</title><style>{_CSS}</style></head><body>",
             "<h1>Forecast evaluation report</h1>",
             "<h2>Scores</h2>",
             f"<p>{len({e['event_id'] for e in events})} resolved events; "
             "lower is better for every metric.</p>",
             _table(summary, SUMMARY_HEADER)]
    if (out / "percentiles.csv").exists():
        pct = read_table(out / "percentiles.csv", PERCENTILE_HEADER,
                         ("candidate_mean", "n_hub_models", "percentile_strict",
                          "percentile_weak"))
        parts += ["<h3>Percentile rank against hub models</h3>", _table(pct, PERCENTILE_HEADER)]
    if (out / "score_histogram.svg").exists():
        parts += ["<h3>Mean scores of hub models</h3>", _svg_inline(out / "score_histogram.svg")]

    parts.append("<h2>Ensemble combination</h2>")
    if all((out / f).exists() for f in SECTIONS["combination"]):
        opt = read_table(out / "combination_optimum.csv", OPTIMUM_HEADER,
                         OPTIMUM_HEADER[1:])
        read_table(out / "combination.csv", COMBINATION_HEADER, COMBINATION_HEADER)
        parts += [_table(opt, OPTIMUM_HEADER), _svg_inline(out / "alpha_curves.svg")]
    else:
        parts.append(_placeholder("Combination curves", "combine"))

    parts.append("<h2>Market diagnostics</h2>")
    if all((out / f).exists() for f in SECTIONS["diagnostics"]):
        im = read_table(out / "impossible_mass.csv", IMPOSSIBLE_HEADER,
                        ("floor", "impossible_mass"))
        mono = read_table(out / "monotonicity.csv", MONOTONE_HEADER,
                          ("n_snapshots", "skipped_snapshots", "n_violating", "max_violation"))
        vol_m = read_table(out / "volume_markets.csv", VOLUME_MARKET_HEADER, ("total_usd",))
        vol_w = read_table(out / "volume_weekly.csv", VOLUME_WEEK_HEADER, ("volume_usd",))
        parts += [f"<h3>Impossible mass ({len(im)} snapshots)</h3>",
                  _svg_inline(out / "impossible_mass.svg"),
                  "<h3>Threshold monotonicity</h3>", _table(mono, MONOTONE_HEADER),
                  "<h3>Traded volume</h3>", _table(vol_m, VOLUME_MARKET_HEADER)]
        if vol_w:
            parts.append(_table(vol_w, VOLUME_WEEK_HEADER))
        else:
            parts.append('<p class="placeholder">No volume data in these markets.</p>')
    else:
        parts.append(_placeholder("Diagnostics", "diagnose"))

    parts += ["<h2>Run metadata</h2>",
              f"<pre>{html.escape(json.dumps(meta, indent=2, sort_keys=True))}</pre>",
              "</body></html>\n"]
    return "\n".join(parts)
