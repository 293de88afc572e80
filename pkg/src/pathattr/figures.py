"""Matplotlib renderings written next to the CSV reports.

The CSV files remain the machine contract; these figures are the human view
of the same rows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _group_metrics(rows):
    metrics = []
    for row in rows:
        if row.metric not in metrics:
            metrics.append(row.metric)
    return metrics


def render_results_figure(rows, path) -> None:
    """One panel per metric: bars of the median score per method and step count."""
    metrics = _group_metrics(rows)
    if not metrics:
        return
    fig, axes = plt.subplots(1, len(metrics), figsize=(4.2 * len(metrics), 3.6), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        sub = [r for r in rows if r.metric == metric]
        labels = [f"{r.method}\n@{r.steps}" if len({x.steps for x in sub}) > 1 else r.method
                  for r in sub]
        ax.bar(range(len(sub)), [r.value for r in sub], color="tab:blue")
        ax.set_xticks(range(len(sub)))
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_title(metric, fontsize=9)
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle("median scores per method", fontsize=10)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def render_sweep_figure(rows, path) -> None:
    """Score versus step count, one line per method, one panel per metric."""
    metrics = _group_metrics(rows)
    if not metrics:
        return
    fig, axes = plt.subplots(1, len(metrics), figsize=(4.2 * len(metrics), 3.6), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        sub = [r for r in rows if r.metric == metric]
        methods = []
        for r in sub:
            if r.method not in methods:
                methods.append(r.method)
        for method in methods:
            pts = sorted((r.steps, r.value) for r in sub if r.method == method)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("steps")
        ax.set_title(metric, fontsize=9)
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=7)
    fig.suptitle("score vs. Riemann step count", fontsize=10)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def render_stability_figure(reports, path) -> None:
    """Median -log MSE per method; higher bars mean more stable saliencies."""
    if not reports:
        return
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(reports), 3.6))
    labels = [r.method for r in reports]
    ax.bar(range(len(reports)), [r.median_neg_log_mse for r in reports], color="tab:green")
    ax.set_xticks(range(len(reports)))
    ax.set_xticklabels(labels, fontsize=8, rotation=20)
    ax.set_ylabel("median -log MSE")
    ax.set_title("saliency stability under compression", fontsize=10)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)
