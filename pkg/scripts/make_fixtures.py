"""Regenerate the synthetic fixtures under ``fixtures/``.

Everything is drawn from one seeded generator, so rerunning this script
reproduces the committed files byte for byte.

    python scripts/make_fixtures.py [--seed 20260101] [--out fixtures]
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy.stats import norm

DAY = 86400
HUB_LEVELS = [0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65,
              0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.975, 0.99]
FLU_TARGET = "flu/us/cumulative_hosp_rate"
FLU_HUB_TARGET = "flu hosp rate increment"
MEASLES_TARGET = "measles/us/cumulative_cases"
DIAG_TARGET = "diag/us/cumulative_rate"


def ts(d: date | datetime) -> int:
    if isinstance(d, datetime):
        return int(d.timestamp())
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())


def rfc3339(t: int) -> str:
    return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def noon(d: date) -> int:
    return ts(d) + 12 * 3600


def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def market_doc(market_id, disease, structure, resolution, contracts, volume):
    doc = {
        "market_id": market_id,
        "disease": disease,
        "structure": structure,
        "resolution_time": rfc3339(resolution),
        "contracts": contracts,
    }
    if volume is not None:
        doc["volume"] = volume
    return doc


def price_points(rng, times, probs, drop=0.05):
    """Hourly-bucket price ticks with jitter inside the hour and a few missing ticks."""
    pts = []
    for k, (t, p) in enumerate(zip(times, probs)):
        if 0 < k < len(times) - 1 and rng.random() < drop:
            continue
        jitter = int(rng.integers(0, 3000))
        pts.append([t + jitter, round(float(np.clip(p, 0.001, 0.999)), 3)])
    return pts


def cumulative_volume(rng, times):
    total, out = 0.0, []
    for t in times:
        total += float(rng.gamma(2.0, 60.0))
        out.append([t, round(total, 2)])
    return out


# ------------------------------------------------------------------ influenza

def flu_truth(rng, weeks):
    """Weekly incidence per 100k with a winter peak, and its running total."""
    k = np.arange(weeks)
    peak = 35  # weeks after the first publication
    inc = 0.08 + 5.5 * np.exp(-0.5 * ((k - peak) / 5.5) ** 2)
    inc *= np.exp(rng.normal(0, 0.08, size=weeks))
    return inc, np.cumsum(inc)


def make_flu(rng, out: Path) -> None:
    first_pub = date(2025, 5, 2)  # a Friday
    weeks = 57
    pub_dates = [first_pub + timedelta(weeks=k) for k in range(weeks)]
    inc, cum = flu_truth(rng, weeks)
    # the newest week is reported incomplete; later publications fill it in
    published = cum - 0.25 * inc * rng.random(weeks)
    published = np.round(published, 3)
    pub_ts = [noon(d) for d in pub_dates]
    rows = [(FLU_TARGET, d.isoformat(), f"{v:.3f}", "synthetic-surveillance")
            for d, v in zip(pub_dates, published)]
    surv = out / "flu" / "surveillance"
    write_csv(surv / "archive_2025.csv", ("target_key", "published", "value", "source"),
              [r for r in rows if r[1] < "2026-01-01"])
    # the second archive repeats the last 2025 row, as overlapping downloads do
    write_csv(surv / "archive_2026.csv", ("target_key", "published", "value", "source"),
              [r for r in rows if r[1] >= "2025-12-26"])

    def value_as_of(t):
        i = np.searchsorted(pub_ts, t, side="right") - 1
        return float(published[i]) if i >= 0 else None

    def settlement(t):
        i = int(np.searchsorted(pub_ts, t, side="left"))
        return float(published[i])

    hub_rows = []
    first_res = date(2026, 1, 10)  # a Saturday
    for m in range(16):
        res_day = first_res + timedelta(weeks=m)
        resolution = ts(res_day) + DAY - 1  # 23:59:59 on the Saturday
        open_t = ts(res_day - timedelta(weeks=3))
        truth = settlement(resolution)
        width = 2 if truth < 45 else 3
        # markets list bins around a noisy guess made at listing time
        guess = truth + rng.normal(0, 1.5 * width)
        lower = max(1, int(round(guess - 2.5 * width)))
        edges = [0] + [lower + j * width for j in range(5)]
        labels = [f"Under {edges[1]}"]
        labels += [f"{a}-{b}" for a, b in zip(edges[1:-1], edges[2:])]
        labels.append(f"{edges[-1]} or more")

        times = list(range(open_t, resolution - 3600, 12 * 3600))
        bias = rng.normal(0, 0.8)
        beliefs = []
        for t in times:
            weeks_left = (resolution - t) / (7 * DAY)
            sd = 0.7 + 1.1 * weeks_left
            centre = truth + bias * weeks_left + rng.normal(0, 0.5 * sd)
            cdf = norm.cdf((np.array(edges[1:], dtype=float) - centre) / sd)
            p = np.diff(np.concatenate(([0.0], cdf, [1.0])))
            # stale quotes linger on the lowest bins
            p[:2] += 0.03 * np.exp(-(t - open_t) / (10 * DAY))
            p = p * rng.normal(1.02, 0.02) + rng.normal(0, 0.004, size=p.size)
            beliefs.append(p)
        beliefs = np.array(beliefs)
        contracts = []
        for j, label in enumerate(labels):
            contracts.append({
                "contract_id": f"flu-{m:02d}-c{j}",
                "label": label,
                "points": price_points(rng, times, beliefs[:, j]),
            })
        volume = None if m in (5, 12) else cumulative_volume(rng, times)
        doc = market_doc(f"flu-{res_day.isoformat()}", "influenza", "range_bins", resolution,
                         contracts, volume)
        write_json(out / "flu" / "markets" / f"flu-{m:02d}.json", doc)

        # hub forecasts of the increment from the reference date to the resolution date
        for h in range(4):
            ref_day = res_day - timedelta(weeks=h)
            last = value_as_of(ts(ref_day))
            inc_true = truth - last
            s = 0.45 + 0.75 * h
            models = {
                "modelA": (inc_true + rng.normal(0, 0.6 * s), s),
                "modelB": (inc_true * 1.25 + 0.5 + rng.normal(0, 0.6 * s), 0.55 * s),
                "modelC": (inc_true * 0.9 + rng.normal(0, 0.9 * s), 1.8 * s),
            }
            qvals = {}
            for name, (mu, sd) in models.items():
                qvals[name] = np.maximum(0.0, mu + sd * norm.ppf(HUB_LEVELS))
            qvals["ensemble"] = np.mean([qvals[k] for k in ("modelA", "modelB", "modelC")],
                                        axis=0)
            for name in ("ensemble", "modelA", "modelB", "modelC"):
                for lv, v in zip(HUB_LEVELS, qvals[name]):
                    hub_rows.append((ref_day.isoformat(), FLU_HUB_TARGET, h, "quantile",
                                     f"{lv:g}", f"{v:.4f}", name))
                hub_rows.append((ref_day.isoformat(), FLU_HUB_TARGET, h, "median", "",
                                 f"{float(np.median(qvals[name])):.4f}", name))
    write_csv(out / "flu" / "hub" / "hub_forecasts.csv",
              ("reference_date", "target", "horizon", "output_type", "output_type_id", "value",
               "model_id"), hub_rows)


# -------------------------------------------------------------------- measles

def make_measles(rng, out: Path) -> None:
    first_pub = date(2025, 1, 8)  # a Wednesday
    weeks = 73
    pub_dates = [first_pub + timedelta(weeks=k) for k in range(weeks)]
    inc = rng.poisson(lam=np.linspace(25, 60, weeks) + 30 * np.sin(np.arange(weeks) / 6.0) ** 2)
    cum = np.cumsum(inc)
    pub_ts = [noon(d) for d in pub_dates]
    rows = [(MEASLES_TARGET, d.isoformat(), str(int(v)), "synthetic-archive")
            for d, v in zip(pub_dates, cum)]
    write_csv(out / "measles" / "surveillance" / "measles_weekly.csv",
              ("target_key", "published", "value", "source"), rows)

    ends = [(date(2026, 3, 31), "March 31, 2026"), (date(2026, 4, 30), "April 30, 2026"),
            (date(2026, 5, 15), "May 15, 2026")]
    for m, (end, text) in enumerate(ends):
        resolution = ts(end) + DAY - 1
        truth = float(cum[int(np.searchsorted(pub_ts, resolution, side="left"))])
        step = 250
        base = int(round((truth + rng.normal(0, 150)) / step)) * step - step
        thresholds = [base + step * j for j in range(4)]
        open_t = resolution - 42 * DAY
        times = list(range(open_t - open_t % 3600, resolution - 3600, DAY))
        contracts = []
        quotes = []
        for t in times:
            weeks_left = (resolution - t) / (7 * DAY)
            sd = 40 + 45 * weeks_left
            centre = truth + rng.normal(0, 0.4 * sd)
            q = norm.sf((np.array(thresholds, dtype=float) - centre) / sd)
            q = q + rng.normal(0, 0.01, size=q.size)
            quotes.append(q)
        quotes = np.array(quotes)
        if m == 1:
            # a stretch where the two top thresholds trade out of order
            quotes[10:14, 3] = quotes[10:14, 2] + 0.04
        for j, n in enumerate(thresholds):
            contracts.append({
                "contract_id": f"measles-{m}-t{n}",
                "label": f"Will the US report at least {n:,} measles cases by {text}?",
                "points": price_points(rng, times, quotes[:, j], drop=0.0),
            })
        volume = None if m == 2 else cumulative_volume(rng, times)
        doc = market_doc(f"measles-{end.isoformat()}", "measles", "thresholds", resolution,
                         contracts, volume)
        write_json(out / "measles" / "markets" / f"measles-{m}.json", doc)


# ----------------------------------------------------------------- diagnostic

# Snapshot prices (one row per snapshot, one column per bin) and the value
# published just before each snapshot. Impossible mass is the sum over bins
# whose upper edge is at or below that value; the expected series is written
# out by hand next to the fixture.
DIAG_EDGES = [0, 2, 4, 6, 8]
DIAG_LABELS = ["Under 2", "2-4", "4-6", "6-8", "8 or more"]
DIAG_PRICES = [
    [0.08, 0.30, 0.40, 0.17, 0.05],
    [0.01, 0.04, 0.55, 0.30, 0.10],
    [0.005, 0.015, 0.50, 0.38, 0.10],
    [0.002, 0.003, 0.005, 0.79, 0.20],
]
DIAG_PUBS = [("2026-01-30", 1.8), ("2026-02-06", 2.5), ("2026-02-13", 4.2), ("2026-02-20", 4.6),
             ("2026-02-27", 6.3), ("2026-03-06", 7.1)]
DIAG_SNAPSHOTS = ["2026-02-07T12:00:00Z", "2026-02-14T12:00:00Z", "2026-02-21T12:00:00Z",
                  "2026-02-28T12:00:00Z"]
DIAG_EXPECTED = [0.08, 0.05, 0.02, 0.01]


def make_diagnostic(out: Path) -> None:
    snap_ts = [ts(datetime.fromisoformat(s.replace("Z", "+00:00"))) for s in DIAG_SNAPSHOTS]
    contracts = []
    for j, label in enumerate(DIAG_LABELS):
        contracts.append({
            "contract_id": f"diag-c{j}",
            "label": label,
            "points": [[t, row[j]] for t, row in zip(snap_ts, DIAG_PRICES)],
        })
    resolution = ts(date(2026, 3, 1))
    doc = market_doc("diag-2026-03-01", "influenza", "range_bins", resolution, contracts, None)
    write_json(out / "diagnostic" / "markets" / "diag.json", doc)
    write_csv(out / "diagnostic" / "surveillance" / "diag.csv",
              ("target_key", "published", "value", "source"),
              [(DIAG_TARGET, d, f"{v}", "hand-authored") for d, v in DIAG_PUBS])
    write_json(out / "diagnostic" / "expected_impossible_mass.json", {
        "market_id": "diag-2026-03-01",
        "snapshots": DIAG_SNAPSHOTS,
        "floors": [2.5, 4.2, 4.6, 6.3],
        "impossible_mass": DIAG_EXPECTED,
    })


CONFIGS = {
    "flu/config.toml": f"""\
disease = "influenza"
target_key = "{FLU_TARGET}"
fixture = "markets"
surveillance_dir = "surveillance"
hub_path = "hub/hub_forecasts.csv"
hub_target = "{FLU_HUB_TARGET}"
ensemble_model = "ensemble"
offline = true
fidelity_minutes = 60
# hub forecasts are already in rate units
kappa = 1.0
grid_step = 0.01
output_dir = "../../out/flu"
seed = 20260101
workers = 4

[arima]
max_p = 3
max_q = 3
max_d = 2
""",
    "measles/config.toml": f"""\
disease = "measles"
target_key = "{MEASLES_TARGET}"
fixture = "markets"
surveillance_dir = "surveillance"
offline = true
fidelity_minutes = 60
output_dir = "../../out/measles"
seed = 20260101
""",
    "diagnostic/config.toml": f"""\
disease = "influenza"
target_key = "{DIAG_TARGET}"
fixture = "markets"
surveillance_dir = "surveillance"
offline = true
output_dir = "../../out/diagnostic"

[arima]
enabled = false
""",
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=20260101)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    args = ap.parse_args()
    for sub in ("flu", "measles", "diagnostic"):
        shutil.rmtree(args.out / sub, ignore_errors=True)
    rng = np.random.default_rng(args.seed)
    make_flu(rng, args.out)
    make_measles(rng, args.out)
    make_diagnostic(args.out)
    for rel, text in CONFIGS.items():
        (args.out / rel).write_text(text, encoding="utf-8")
    print(f"fixtures written to {args.out}")


if __name__ == "__main__":
    main()
