"""Multi-label metric suite, boundary-error mining, latency timing, and comparison tables.

Conventions used throughout (and stated in every report footer):
  * exact match counts a task only when all six bits agree;
  * Hamming score pools correct bits over all tasks (bits / (6 * n));
  * a per-skill precision, recall, or F1 whose denominator is zero is 1.0
    (perfect agreement on absence);
  * summary rates render as one-decimal percentages, F1 as three decimals.
"""

from __future__ import annotations

import json
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from skillroute.core import (
    NUM_SKILLS,
    SKILLS,
    ArgumentError,
    SkillrouteError,
    SkillVector,
    TaskRecord,
    validate_task_record,
)

# All 15 unordered skill pairs, in canonical (index) order.
SKILL_PAIRS: tuple[tuple[int, int], ...] = tuple(
    (a, b) for a in range(NUM_SKILLS) for b in range(a + 1, NUM_SKILLS)
)

F1_CONVENTION_NOTE = "zero-denominator precision/recall/F1 scored as 1.0 (agreement on absence)"


def _check_pair(truths: Sequence[SkillVector], preds: Sequence[SkillVector]) -> None:
    if len(truths) == 0:
        raise ArgumentError("need at least one (truth, prediction) pair")
    if len(truths) != len(preds):
        raise ArgumentError(f"length mismatch: {len(truths)} truths vs {len(preds)} predictions")


@dataclass(frozen=True)
class SkillConfusion:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class MetricsReport:
    """Everything the suite measures for one system on one record set."""

    n: int
    exact_match: float
    hamming_score: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_f1: float
    confusion: tuple[SkillConfusion, ...]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "exact_match": self.exact_match,
            "hamming_score": self.hamming_score,
            "per_skill": {
                name: {
                    "precision": self.precision[i],
                    "recall": self.recall[i],
                    "f1": self.f1[i],
                    "tp": self.confusion[i].tp,
                    "fp": self.confusion[i].fp,
                    "fn": self.confusion[i].fn,
                    "tn": self.confusion[i].tn,
                }
                for i, name in enumerate(SKILLS)
            },
            "macro_f1": self.macro_f1,
            "note": F1_CONVENTION_NOTE,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "MetricsReport":
        per_skill = raw["per_skill"]
        return cls(
            n=int(raw["n"]),
            exact_match=float(raw["exact_match"]),
            hamming_score=float(raw["hamming_score"]),
            precision=tuple(float(per_skill[s]["precision"]) for s in SKILLS),
            recall=tuple(float(per_skill[s]["recall"]) for s in SKILLS),
            f1=tuple(float(per_skill[s]["f1"]) for s in SKILLS),
            macro_f1=float(raw["macro_f1"]),
            confusion=tuple(
                SkillConfusion(
                    tp=int(per_skill[s]["tp"]),
                    fp=int(per_skill[s]["fp"]),
                    fn=int(per_skill[s]["fn"]),
                    tn=int(per_skill[s]["tn"]),
                )
                for s in SKILLS
            ),
        )


def exact_match(truths: Sequence[SkillVector], preds: Sequence[SkillVector]) -> float:
    """Fraction of tasks whose six predicted bits all equal the truth."""
    _check_pair(truths, preds)
    hits = sum(1 for y, p in zip(truths, preds) if y.bits == p.bits)
    return hits / len(truths)


def hamming_score(truths: Sequence[SkillVector], preds: Sequence[SkillVector]) -> float:
    """Pooled fraction of correct skill bits over all tasks."""
    _check_pair(truths, preds)
    correct = sum(
        sum(1 for a, b in zip(y.bits, p.bits) if a == b) for y, p in zip(truths, preds)
    )
    return correct / (NUM_SKILLS * len(truths))


def per_skill_confusion(
    truths: Sequence[SkillVector], preds: Sequence[SkillVector]
) -> tuple[SkillConfusion, ...]:
    _check_pair(truths, preds)
    counts = []
    for i in range(NUM_SKILLS):
        tp = fp = fn = tn = 0
        for y, p in zip(truths, preds):
            if y.bits[i] and p.bits[i]:
                tp += 1
            elif not y.bits[i] and p.bits[i]:
                fp += 1
            elif y.bits[i] and not p.bits[i]:
                fn += 1
            else:
                tn += 1
        counts.append(SkillConfusion(tp=tp, fp=fp, fn=fn, tn=tn))
    return tuple(counts)


def _rate(numerator: int, denominator: int) -> float:
    # Zero denominator scores 1.0: agreement on absence.
    return numerator / denominator if denominator else 1.0


def per_skill_prf(
    truths: Sequence[SkillVector], preds: Sequence[SkillVector]
) -> tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...], float]:
    """Per-skill (precision, recall, F1) plus macro F1 (unweighted mean of the six F1s)."""
    confusion = per_skill_confusion(truths, preds)
    precision = tuple(_rate(c.tp, c.tp + c.fp) for c in confusion)
    recall = tuple(_rate(c.tp, c.tp + c.fn) for c in confusion)
    f1 = tuple(_rate(2 * c.tp, 2 * c.tp + c.fp + c.fn) for c in confusion)
    macro_f1 = sum(f1) / NUM_SKILLS
    return precision, recall, f1, macro_f1


def metrics_report(truths: Sequence[SkillVector], preds: Sequence[SkillVector]) -> MetricsReport:
    """Compute the full metric suite in one pass."""
    precision, recall, f1, macro_f1 = per_skill_prf(truths, preds)
    return MetricsReport(
        n=len(truths),
        exact_match=exact_match(truths, preds),
        hamming_score=hamming_score(truths, preds),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=macro_f1,
        confusion=per_skill_confusion(truths, preds),
    )


# -- boundary-error mining ----------------------------------------------


@dataclass(frozen=True)
class BoundaryReport:
    """Which confusable skill pairs the errors concentrate on.

    An errored task is attributed to pair (a, b) when its set of differing bit
    positions is non-empty and contained in {a, b}; a single-bit error on a
    therefore counts toward every pair containing a. Errors spanning three or
    more bits are counted in the total only.
    """

    total_errors: int
    pair_counts: dict[tuple[str, str], int]
    skill_error_bits: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "total_errors": self.total_errors,
            "pair_counts": {f"{a}+{b}": n for (a, b), n in self.pair_counts.items()},
            "skill_error_bits": {name: self.skill_error_bits[i] for i, name in enumerate(SKILLS)},
        }


def mine_boundary_errors(
    truths: Sequence[SkillVector], preds: Sequence[SkillVector]
) -> BoundaryReport:
    _check_pair(truths, preds)
    total = 0
    pair_counts = {(SKILLS[a], SKILLS[b]): 0 for a, b in SKILL_PAIRS}
    bit_counts = [0] * NUM_SKILLS
    for y, p in zip(truths, preds):
        diff = {i for i in range(NUM_SKILLS) if y.bits[i] != p.bits[i]}
        if not diff:
            continue
        total += 1
        for i in diff:
            bit_counts[i] += 1
        for a, b in SKILL_PAIRS:
            if diff <= {a, b}:
                pair_counts[(SKILLS[a], SKILLS[b])] += 1
    return BoundaryReport(
        total_errors=total, pair_counts=pair_counts, skill_error_bits=tuple(bit_counts)
    )


# -- latency --------------------------------------------------------------


@dataclass(frozen=True)
class LatencyReport:
    """Per-sample wall-clock timings; strictly sequential, no batching."""

    durations_ms: tuple[float, ...]
    median_ms: float
    p95_ms: float
    mean_ms: float
    count: int
    failures: int
    batching_disabled: bool = True

    def to_dict(self) -> dict:
        return {
            "median_ms": self.median_ms,
            "p95_ms": self.p95_ms,
            "mean_ms": self.mean_ms,
            "count": self.count,
            "failures": self.failures,
            "batching_disabled": self.batching_disabled,
            "durations_ms": list(self.durations_ms),
        }


def measure_latency(
    predict_fn: Callable[[str], object], texts: Sequence[str], warmup: int = 3
) -> LatencyReport:
    """Time one call per text, sequentially, after ``warmup`` untimed calls.

    If a call's result exposes a ``backoff_seconds`` attribute, that wait is
    subtracted from its measured duration. Failing calls are counted as
    failures and excluded from the percentiles.

    Raises:
        ArgumentError: on empty texts or negative warmup.
        SkillrouteError: when no call succeeds.
    """
    if not texts:
        raise ArgumentError("texts must be non-empty")
    if warmup < 0:
        raise ArgumentError("warmup must be >= 0")
    for i in range(warmup):
        try:
            predict_fn(texts[i % len(texts)])
        except Exception:
            pass
    durations: list[float] = []
    failures = 0
    for text in texts:
        start = time.perf_counter()
        try:
            result = predict_fn(text)
        except Exception:
            failures += 1
            continue
        elapsed = time.perf_counter() - start
        backoff = getattr(result, "backoff_seconds", 0.0) or 0.0
        durations.append(max(elapsed - backoff, 0.0) * 1000.0)
    if not durations:
        raise SkillrouteError("no successful samples")
    ordered = sorted(durations)
    p95_index = max(0, math.ceil(0.95 * len(ordered)) - 1)
    return LatencyReport(
        durations_ms=tuple(durations),
        median_ms=statistics.median(ordered),
        p95_ms=ordered[p95_index],
        mean_ms=statistics.fmean(ordered),
        count=len(durations),
        failures=failures,
    )


# -- comparison tables -----------------------------------------------------


def format_summary_row(name: str, report: MetricsReport, width: int = 28) -> str:
    return (
        f"{name:<{width}} {report.exact_match * 100.0:>11.1f} "
        f"{report.hamming_score * 100.0:>17.1f} {report.macro_f1:>12.3f}"
    )


def compare_models(reports: Mapping[str, MetricsReport]) -> str:
    """Render the side-by-side comparison: summary rows plus per-skill F1.

    Rows are sorted by exact match, descending; ties by name for stability.
    """
    if not reports:
        raise ArgumentError("need at least one report to compare")
    width = max(28, max(len(name) for name in reports) + 2)
    ranked = sorted(reports.items(), key=lambda kv: (-kv[1].exact_match, kv[0]))

    lines = [
        f"{'Model':<{width}} {'Exact Match (%)':>11} {'Hamming Score (%)':>17} {'Macro F1':>12}",
        "-" * (width + 44),
    ]
    lines.extend(format_summary_row(name, report, width) for name, report in ranked)

    lines.append("")
    header = f"{'Skill':<16}" + "".join(f"{name:>{width}}" for name, _ in ranked)
    lines.append(header)
    lines.append("-" * len(header))
    for i, skill in enumerate(SKILLS):
        row = f"{skill:<16}" + "".join(f"{report.f1[i]:>{width}.3f}" for _, report in ranked)
        lines.append(row)
    lines.append("")
    lines.append(f"note: {F1_CONVENTION_NOTE}")
    return "\n".join(lines)


# -- prediction files --------------------------------------------------------


@dataclass(frozen=True)
class PredictionRow:
    """One scored task: the original record plus predicted bits and probabilities."""

    record: TaskRecord
    predicted: SkillVector
    probabilities: tuple[float, ...]


def write_predictions(rows: Sequence[PredictionRow], path: str | Path) -> None:
    """Persist predictions as dataset lines extended with the scored outputs.

    The format keeps any two systems' outputs diffable line by line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            line = row.record.to_line_dict()
            line["predicted_skills"] = row.predicted.to_mapping()
            line["probabilities"] = list(row.probabilities)
            handle.write(json.dumps(line, ensure_ascii=False))
            handle.write("\n")


def read_predictions(path: str | Path) -> list[PredictionRow]:
    rows: list[PredictionRow] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            predicted = raw.pop("predicted_skills", None)
            probabilities = raw.pop("probabilities", None)
            if predicted is None or probabilities is None:
                raise SkillrouteError(f"line {lineno}: not a prediction line")
            record = validate_task_record(raw)
            rows.append(
                PredictionRow(
                    record=record,
                    predicted=SkillVector.from_mapping(predicted, context="predicted_skills"),
                    probabilities=tuple(float(p) for p in probabilities),
                )
            )
    return rows
