"""Static figure rendering for dataset stats and training reports.

Figures accompany the delimited outputs of the ``stats`` and ``train`` report
paths; evaluation reports stay plain tables by design. All rendering uses the
Agg backend and writes PNG files, returning the written paths.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from skillroute.core import SKILLS, DatasetStats  # noqa: E402
from skillroute.training import TrainReport  # noqa: E402

_DPI = 150


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_dataset_figures(stats: DatasetStats, out_dir: str | Path) -> list[Path]:
    """Per-skill balance, combination histogram, and domain counts as bar charts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=(7, 4))
    positives = [stats.skill_positive[name] for name in SKILLS]
    negatives = [stats.skill_negative[name] for name in SKILLS]
    x = range(len(SKILLS))
    ax.bar([i - 0.2 for i in x], positives, width=0.4, label="positive")
    ax.bar([i + 0.2 for i in x], negatives, width=0.4, label="negative")
    ax.set_xticks(list(x))
    ax.set_xticklabels(SKILLS, rotation=30, ha="right")
    ax.set_ylabel("records")
    ax.set_title(f"Per-skill label balance (n={stats.total})")
    ax.legend()
    written.append(_save(fig, out_dir / "skill_balance.png"))

    fig, ax = plt.subplots(figsize=(8, max(3, 0.3 * len(stats.combination_histogram))))
    combos = sorted(stats.combination_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    ax.barh([c for c, _ in combos][::-1], [n for _, n in combos][::-1])
    ax.set_xlabel("records")
    ax.set_title(f"Skill combinations ({stats.combination_count} distinct)")
    written.append(_save(fig, out_dir / "combinations.png"))

    if stats.domain_counts:
        fig, ax = plt.subplots(figsize=(8, max(3, 0.28 * len(stats.domain_counts))))
        domains = sorted(stats.domain_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        ax.barh([d for d, _ in domains][::-1], [n for _, n in domains][::-1])
        ax.set_xlabel("records")
        ax.set_title("Tasks per domain")
        written.append(_save(fig, out_dir / "domains.png"))

    return written


def render_training_figures(report: TrainReport, out_dir: str | Path) -> list[Path]:
    """Loss curve plus inner-validation exact match / macro F1 per epoch."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = range(1, report.epochs_run + 1)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(list(epochs), list(report.train_loss))
    ax.set_xlabel("epoch")
    ax.set_ylabel("weighted BCE loss")
    ax.set_title("Training loss")
    loss_path = _save(fig, out_dir / "train_loss.png")

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(list(epochs), list(report.inner_em), label="exact match")
    ax.plot(list(epochs), list(report.inner_macro_f1), label="macro F1")
    ax.axvline(report.best_epoch, linestyle="--", linewidth=1, color="gray",
               label=f"best epoch ({report.best_epoch})")
    ax.set_xlabel("epoch")
    ax.set_ylabel("inner-validation score")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Inner-validation curves")
    ax.legend()
    curves_path = _save(fig, out_dir / "inner_validation.png")

    return [loss_path, curves_path]
