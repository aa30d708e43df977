"""Report files: canonical JSON, CSV for tabular data, one PNG per report.

All writers are deterministic: JSON is sorted, CSV field order is fixed, and
figures carry fixed metadata so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .attack import AttackResult
from .metrics import TransferMatrix

# A fixed Software tag replaces matplotlib's version string so reruns with the
# same inputs write identical PNG bytes.
_PNG_METADATA = {"Software": "seqevade"}
_DPI = 110


def write_json(obj: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def dataset_figure(lengths_by_label: dict[str, list[int]], path: str | Path) -> None:
    """Sequence-length histogram per class."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name in sorted(lengths_by_label):
        ax.hist(lengths_by_label[name], bins=24, alpha=0.6, label=name)
    ax.set_xlabel("sequence length")
    ax.set_ylabel("samples")
    ax.set_title("generated corpus lengths")
    ax.legend()
    _save(fig, path)


def training_figure(report: dict, title: str, path: str | Path) -> None:
    """Epoch loss curve; annotates validation window accuracy when present."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    losses = report.get("epoch_losses", [])
    if losses:
        ax.plot(range(1, len(losses) + 1), losses, marker="o")
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
    else:
        ax.text(0.5, 0.5, "no iterative training curve", ha="center", va="center",
                transform=ax.transAxes)
        ax.set_xticks([])
        ax.set_yticks([])
    val = report.get("val_window_accuracy")
    suffix = f" (val window acc {val:.3f})" if val is not None else ""
    ax.set_title(title + suffix)
    _save(fig, path)


def surrogate_figure(report: dict, path: str | Path) -> None:
    """Working-set growth and per-round agreement with the target."""
    rounds = report.get("rounds", [])
    fig, (ax_size, ax_agree) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ts = [r["round"] for r in rounds]
    ax_size.plot(ts, [r["set_size"] for r in rounds], marker="o")
    ax_size.set_yscale("log", base=2)
    ax_size.set_xlabel("augmentation round")
    ax_size.set_ylabel("working-set size")
    ax_size.set_title("set doubling")
    agreements = [(r["round"], r["agreement"]) for r in rounds if r.get("agreement") is not None]
    if agreements:
        ax_agree.plot([a[0] for a in agreements], [a[1] for a in agreements], marker="o")
        ax_agree.set_ylim(0.0, 1.02)
    ax_agree.set_xlabel("augmentation round")
    ax_agree.set_ylabel("label agreement")
    ax_agree.set_title("fidelity to target")
    fig.tight_layout()
    _save(fig, path)


def attack_figure(summary: dict, results: list[AttackResult], path: str | Path) -> None:
    """Success/failure bar plus the overhead distribution of successful runs."""
    fig, (ax_bar, ax_hist) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    successes = summary.get("successes", 0)
    failures = summary.get("detected", 0) - successes
    ax_bar.bar(["evaded", "held"], [successes, failures], color=["#2a9d8f", "#e76f51"])
    ax_bar.set_ylabel("samples")
    eff = summary.get("effectiveness")
    ax_bar.set_title("attack outcome" + (f" ({eff:.1%})" if eff is not None else ""))
    overheads = [r.overhead for r in results if r.success]
    if overheads:
        ax_hist.hist(overheads, bins=20, color="#264653")
        ax_hist.set_xlabel("added / original length")
        ax_hist.set_ylabel("successful samples")
    else:
        ax_hist.text(0.5, 0.5, "no successful attacks", ha="center", va="center",
                     transform=ax_hist.transAxes)
        ax_hist.set_xticks([])
        ax_hist.set_yticks([])
    ax_hist.set_title("insertion overhead")
    fig.tight_layout()
    _save(fig, path)


def rewrite_figure(added_counts: list[int], path: str | Path) -> None:
    """Histogram of no-op insertions per rewritten trace."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if added_counts:
        ax.hist(added_counts, bins=min(20, max(3, len(set(added_counts)))), color="#264653")
        ax.set_xlabel("no-op calls inserted")
        ax.set_ylabel("traces")
    else:
        ax.text(0.5, 0.5, "no traces rewritten", ha="center", va="center",
                transform=ax.transAxes)
        ax.set_xticks([])
        ax.set_yticks([])
    ax.set_title("insertion counts per rewritten trace")
    _save(fig, path)


def verify_figure(checked: int, violated: int, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.bar(["preserved", "violated"], [checked - violated, violated],
           color=["#2a9d8f", "#e76f51"])
    ax.set_ylabel("traces")
    ax.set_title("functionality verification")
    _save(fig, path)


def transfer_figure(matrix: TransferMatrix, path: str | Path) -> None:
    """Effectiveness heatmap, surrogates by rows and targets by columns."""
    grid = np.full((len(matrix.rows), len(matrix.columns)), np.nan)
    for i, r in enumerate(matrix.rows):
        for j, c in enumerate(matrix.columns):
            cell = matrix.cells.get((r, c))
            if cell is not None and cell.effectiveness is not None:
                grid[i, j] = cell.effectiveness
    fig, ax = plt.subplots(figsize=(1.2 * len(matrix.columns) + 3.0,
                                    0.9 * len(matrix.rows) + 2.2))
    masked = np.ma.masked_invalid(grid)
    im = ax.imshow(masked, vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(matrix.columns)), matrix.columns, rotation=30, ha="right")
    ax.set_yticks(range(len(matrix.rows)), matrix.rows)
    for i in range(len(matrix.rows)):
        for j in range(len(matrix.columns)):
            text = "err" if np.isnan(grid[i, j]) else f"{grid[i, j]:.2f}"
            ax.text(j, i, text, ha="center", va="center",
                    color="white" if (np.isnan(grid[i, j]) or grid[i, j] < 0.6) else "black")
    ax.set_title("attack effectiveness by surrogate and target")
    fig.colorbar(im, ax=ax, label="effectiveness")
    fig.tight_layout()
    _save(fig, path)
