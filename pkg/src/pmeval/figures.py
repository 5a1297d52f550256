"""SVG figures with byte-stable output."""

from __future__ import annotations

import io
from collections import defaultdict
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_LABELS = {"brier": "Brier score", "log_score": "Log score", "crps": "CRPS"}
_STYLE = {
    "svg.hashsalt": "pmeval",
    "svg.fonttype": "none",
    "font.size": 9,
}


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return buf.getvalue()


def score_histogram(hub_means: Mapping[str, Mapping[str, float]],
                    markers: Mapping[str, Mapping[str, float]],
                    metrics: Sequence[str]) -> str:
    """Histogram of hub-model mean scores per metric, with vertical markers for named models."""
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(metrics), figsize=(3.4 * len(metrics), 2.8))
        axes = [axes] if len(metrics) == 1 else list(axes)
        for ax, metric in zip(axes, metrics):
            values = [m[metric] for m in hub_means.values()]
            if values:
                ax.hist(values, bins=min(10, max(3, len(values))), color="#b8c4d6",
                        edgecolor="#4a5a73")
            for k, (name, means) in enumerate(sorted(markers.items())):
                ax.axvline(means[metric], color=f"C{k + 1}", lw=1.6, label=name)
            ax.set_xlabel(_LABELS.get(metric, metric))
            ax.set_ylabel("hub models")
        axes[0].legend(frameon=False, fontsize=8)
        fig.tight_layout()
        return _svg(fig)


def alpha_curves(alphas: Sequence[float], scores: Mapping[str, Sequence[float]],
                 alpha_star: Mapping[str, float], ensemble_name: str = "ensemble") -> str:
    metrics = list(scores)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(metrics), figsize=(3.4 * len(metrics), 2.8))
        axes = [axes] if len(metrics) == 1 else list(axes)
        for ax, metric in zip(axes, metrics):
            ax.plot(alphas, scores[metric], color="C0", lw=1.4)
            a = alpha_star[metric]
            ax.axvline(a, color="C3", ls="--", lw=1.0, label=f"alpha* = {a:.2f}")
            ax.set_xlabel(f"weight on {ensemble_name} (alpha)")
            ax.set_ylabel(f"mean {_LABELS.get(metric, metric)}")
            ax.set_xlim(0, 1)
            ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        return _svg(fig)


def impossible_mass_plot(points: Sequence) -> str:
    """One line per market: impossible mass against snapshot time (days from first snapshot)."""
    by_market: dict[str, list] = defaultdict(list)
    for p in points:
        by_market[p.market_id].append(p)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        t0 = min((p.time for p in points), default=0)
        for name in sorted(by_market):
            pts = by_market[name]
            ax.plot([(p.time - t0) / 86400 for p in pts], [p.mass for p in pts], lw=1.0,
                    label=name if len(by_market) <= 8 else None)
        ax.set_xlabel("days since first snapshot")
        ax.set_ylabel("impossible mass")
        ax.set_ylim(bottom=0)
        if 0 < len(by_market) <= 8:
            ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        return _svg(fig)
