"""Figure rendering for report documents.

Renders per-metric histograms and an aggregate chart as PNG files next to
the JSON/Markdown output. Imported lazily by the CLI so that headless batch
runs without --figures never touch matplotlib.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import HIGHER_IS_BETTER, METRIC_NAMES

_LABELS = {m: f"{m} {'↑' if HIGHER_IS_BETTER[m] else '↓'}" for m in METRIC_NAMES}


def _metric_values(doc: Mapping, metric: str) -> list[float]:
    return [frame[metric] for frame in doc["frames"] if frame[metric] is not None]


def _hist(ax, values: list[float], color: str) -> None:
    spread = max(values) - min(values)
    if spread > 1e-9:
        ax.hist(values, bins=min(40, max(5, len(values) // 5)), color=color)
    else:  # degenerate range: one centred bin instead of zero-width edges
        centre = sum(values) / len(values)
        ax.hist(values, bins=1, range=(centre - 0.5, centre + 0.5), color=color)


def render_eval_figures(doc: Mapping, stem) -> list[Path]:
    """Write per-frame histograms and the aggregate mean bar chart."""
    stem = Path(stem)
    written: list[Path] = []

    fig, axes = plt.subplots(2, 3, figsize=(12, 7))
    for ax, metric in zip(axes.ravel(), METRIC_NAMES):
        values = _metric_values(doc, metric)
        if values:
            _hist(ax, values, "#4878cf")
            mean = doc["aggregates"][metric]["mean"]
            ax.axvline(mean, color="#d65f5f", linestyle="--", label=f"mean {mean:.4f}")
            ax.legend(fontsize=8)
        else:
            ax.text(0.5, 0.5, "undefined", ha="center", va="center", transform=ax.transAxes)
        ax.set_title(_LABELS[metric])
    fig.suptitle("Per-frame metric distributions")
    fig.tight_layout()
    hist_path = stem.with_name(stem.name + "_metric_histograms.png")
    fig.savefig(hist_path, dpi=120)
    plt.close(fig)
    written.append(hist_path)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    means = [doc["aggregates"][m]["mean"] for m in METRIC_NAMES]
    bars = [0.0 if v is None else v for v in means]
    ax.bar(range(len(METRIC_NAMES)), bars, color="#4878cf")
    ax.set_xticks(range(len(METRIC_NAMES)))
    ax.set_xticklabels([_LABELS[m] for m in METRIC_NAMES])
    ax.set_title("Aggregate metric means")
    ax.axhline(0.0, color="black", linewidth=0.8)
    fig.tight_layout()
    means_path = stem.with_name(stem.name + "_metric_means.png")
    fig.savefig(means_path, dpi=120)
    plt.close(fig)
    written.append(means_path)
    return written


def render_compare_figures(doc: Mapping, stem) -> list[Path]:
    """Write the per-metric delta distributions and signed mean-delta chart."""
    stem = Path(stem)
    written: list[Path] = []

    fig, axes = plt.subplots(2, 3, figsize=(12, 7))
    for ax, metric in zip(axes.ravel(), METRIC_NAMES):
        values = _metric_values(doc, metric)
        if values:
            _hist(ax, values, "#6acc65")
            ax.axvline(0.0, color="black", linewidth=0.8)
        else:
            ax.text(0.5, 0.5, "undefined", ha="center", va="center", transform=ax.transAxes)
        ax.set_title(f"delta {_LABELS[metric]}")
    fig.suptitle("Per-frame metric deltas (b - a)")
    fig.tight_layout()
    hist_path = stem.with_name(stem.name + "_delta_histograms.png")
    fig.savefig(hist_path, dpi=120)
    plt.close(fig)
    written.append(hist_path)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    deltas = [doc["aggregates"][m]["mean_delta"] for m in METRIC_NAMES]
    bars = [0.0 if v is None else v for v in deltas]
    colors = ["#6acc65" if b >= 0 else "#d65f5f" for b in bars]
    ax.bar(range(len(METRIC_NAMES)), bars, color=colors)
    ax.set_xticks(range(len(METRIC_NAMES)))
    ax.set_xticklabels([_LABELS[m] for m in METRIC_NAMES])
    ax.set_title("Mean metric deltas (b - a)")
    ax.axhline(0.0, color="black", linewidth=0.8)
    fig.tight_layout()
    means_path = stem.with_name(stem.name + "_delta_means.png")
    fig.savefig(means_path, dpi=120)
    plt.close(fig)
    written.append(means_path)
    return written
