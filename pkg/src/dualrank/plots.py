"""Figure renderers for the delimited report files.

Each function reads one of the CSV outputs and writes a PNG next to it.
All rendering goes through the Agg backend so headless runs work.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import DataError


def _read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"no rows in {path}")
    return rows


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_metrics(csv_path, out_path=None) -> Path:
    """Grouped bars: metric value per K, one panel per task."""
    rows = _read_csv(csv_path)
    out_path = out_path or Path(csv_path).with_suffix(".png")
    tasks = sorted({r["task"] for r in rows})
    fig, axes = plt.subplots(1, len(tasks), figsize=(5.2 * len(tasks), 3.4), squeeze=False)
    for ax, task in zip(axes[0], tasks):
        sub = [r for r in rows if r["task"] == task]
        ks = sorted({int(r["K"]) for r in sub})
        width = 0.38
        for off, metric in ((-width / 2, "recall"), (width / 2, "ndcg")):
            vals = [float(r["value"]) for k in ks for r in sub
                    if int(r["K"]) == k and r["metric"] == metric]
            errs_lo = [float(r["value"]) - float(r["ci_low"]) for k in ks for r in sub
                       if int(r["K"]) == k and r["metric"] == metric]
            errs_hi = [float(r["ci_high"]) - float(r["value"]) for k in ks for r in sub
                       if int(r["K"]) == k and r["metric"] == metric]
            xs = [i + off for i in range(len(ks))]
            ax.bar(xs, vals, width, yerr=[errs_lo, errs_hi], capsize=3,
                   label=metric.upper() if metric == "ndcg" else metric.capitalize())
        ax.set_xticks(range(len(ks)))
        ax.set_xticklabels([f"@{k}" for k in ks])
        ax.set_ylim(0, 1.05)
        ax.set_title(task)
        ax.legend(frameon=False, fontsize=8)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    return _save(fig, out_path)


def plot_sweep(csv_path, out_path=None) -> Path:
    """Metric-vs-epsilon lines for both tasks, plus the multiplier path."""
    rows = [r for r in _read_csv(csv_path) if r["status"] == "ok"]
    if not rows:
        raise DataError(f"no feasible sweep rows in {csv_path}")
    out_path = out_path or Path(csv_path).with_suffix(".png")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 3.4))
    series = defaultdict(list)
    for r in rows:
        key = (r["task"], r["metric"], int(r["K"]))
        series[key].append((float(r["epsilon"]), float(r["value"])))
    for (task, metric, k), pts in sorted(series.items()):
        if metric not in ("recall", "ndcg") or k != 5:
            continue
        pts.sort()
        ax1.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                 label=f"{task[:4]} {metric}@{k}")
    ax1.set_xlabel("eligibility target")
    ax1.set_ylabel("metric value")
    ax1.legend(frameon=False, fontsize=8)

    lam = sorted({(float(r["epsilon"]), float(r["lambda_star"])) for r in rows})
    ax2.plot([p[0] for p in lam], [p[1] for p in lam], marker="s", color="tab:red")
    rank1 = sorted(
        (float(r["epsilon"]), float(r["value"]))
        for r in rows if r["metric"] == "rank1_mean_s_qual"
    )
    if rank1:
        ax2b = ax2.twinx()
        ax2b.plot([p[0] for p in rank1], [p[1] for p in rank1], marker="^",
                  color="tab:blue")
        ax2b.set_ylabel("rank-1 mean qualification", color="tab:blue")
    ax2.set_xlabel("eligibility target")
    ax2.set_ylabel("selected multiplier", color="tab:red")
    for ax in (ax1, ax2):
        ax.spines["top"].set_visible(False)
    return _save(fig, out_path)


def plot_agreement(csv_path, out_path=None) -> Path:
    rows = _read_csv(csv_path)
    out_path = out_path or Path(csv_path).with_suffix(".png")
    ks = [int(r["k"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.plot(ks, [float(r["jaccard_mean"]) for r in rows], marker="o", label="top-K Jaccard")
    ax.plot(ks, [float(r["contain_a_in_b"]) for r in rows], marker="s",
            label="A top-1 in B top-K")
    ax.plot(ks, [float(r["contain_b_in_a"]) for r in rows], marker="^",
            label="B top-1 in A top-K")
    ax.set_xlabel("K")
    ax.set_ylabel("agreement")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, fontsize=8)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return _save(fig, out_path)


def plot_trace(csv_path, out_path=None) -> Path:
    rows = _read_csv(csv_path)
    out_path = out_path or Path(csv_path).with_suffix(".png")
    steps = [int(r["step"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(steps, [float(r["lambda"]) for r in rows], color="tab:red", label="multiplier")
    ax2 = ax.twinx()
    ax2.plot(steps, [float(r["mean_s_qual"]) for r in rows], color="tab:blue", alpha=0.7,
             label="batch mean s_qual")
    ax.set_xlabel("alignment step")
    ax.set_ylabel("lambda", color="tab:red")
    ax2.set_ylabel("mean qualification score", color="tab:blue")
    return _save(fig, out_path)


def plot_history(csv_path, out_path=None) -> Path:
    rows = _read_csv(csv_path)
    out_path = out_path or Path(csv_path).with_suffix(".png")
    epochs = [int(r["epoch"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 3.4))
    for col, style in (("train_pref_bce", "-"), ("val_pref_bce", "--"),
                       ("train_qual_bce", "-"), ("val_qual_bce", "--")):
        vals = [float(r[col]) if r[col] not in ("nan", "") else float("nan") for r in rows]
        ax1.plot(epochs, vals, style, label=col.replace("_bce", ""))
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("BCE")
    ax1.legend(frameon=False, fontsize=7)
    ax2.plot(epochs, [float(r["eta_pref"]) for r in rows], label="eta pref")
    ax2.plot(epochs, [float(r["eta_qual"]) for r in rows], label="eta qual")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("task weight")
    ax2.legend(frameon=False, fontsize=8)
    for ax in (ax1, ax2):
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    return _save(fig, out_path)


PLOT_KINDS = {
    "metrics": plot_metrics,
    "sweep": plot_sweep,
    "agreement": plot_agreement,
    "trace": plot_trace,
    "history": plot_history,
}
