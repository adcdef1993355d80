"""Synthetic task generation, boundary batches, near-duplicate filtering, and audit flow.

Generation asks a chat provider for strict one-object-per-line output in the
dataset's own line format; lines that fail to parse or validate are dropped
and counted, never repaired. Boundary batches target one confusable skill
pair with three arms (a-only / b-only / both) and label records by the arm
that produced them. Auditing is a human loop: the tool samples a worksheet,
a reviewer edits verdicts, and `apply_audit` folds the decisions back in.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from skillroute.core import (
    DOMAINS,
    SKILLS,
    ArgumentError,
    SkillrouteError,
    SkillVector,
    TaskRecord,
    ValidationError,
    normalize_skill_name,
    validate_task_record,
)
from skillroute.evaluation import SKILL_PAIRS, BoundaryReport
from skillroute.providers import ChatClient, ChatResult, ProviderProfile

CONTEXT_EXCERPT_LIMIT = 50  # prior tasks quoted into a chained batch's prompt
DEFAULT_DEDUPE_THRESHOLD = 0.9

_WORD_RE = re.compile(r"[a-z0-9]+")
_RECORD_KEYS = {"id", "text", "skills", "domain", "source", "split"}

GENERATION_SYSTEM_PROMPT = (
    "You write training data for a robot task router. Follow the output format "
    "exactly: one JSON object per line, nothing else."
)


class GenerationFailedError(SkillrouteError):
    """The provider answered but not one line could be parsed into a record."""

    def __init__(self, message: str, raw_sample: str):
        self.raw_sample = raw_sample
        super().__init__(f"{message}; raw sample: {raw_sample[:200]!r}")


@dataclass(frozen=True)
class GenerationBatchSpec:
    """One generation request: target count, domains, and chained context."""

    provider: ProviderProfile
    count: int
    domains: tuple[str, ...] = DOMAINS
    context: tuple[TaskRecord, ...] = ()
    seed: int = 0
    id_prefix: str = ""
    id_start: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ArgumentError("batch count must be >= 1")
        bad = [d for d in self.domains if d not in DOMAINS and d != "other"]
        if bad:
            raise ArgumentError(f"unknown domains in batch spec: {bad}")


@dataclass(frozen=True)
class GenerationOutcome:
    """Validated records plus the bookkeeping for the run report."""

    records: tuple[TaskRecord, ...]
    requested: int
    parsed: int
    dropped: int
    provider: str

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "requested": self.requested,
            "parsed": self.parsed,
            "dropped": self.dropped,
        }


def _skills_schema_line() -> str:
    return "{" + ", ".join(f'"{name}": true|false' for name in SKILLS) + "}"


def _format_context(records: Sequence[TaskRecord], seed: int) -> str:
    if not records:
        return ""
    rng = random.Random(seed)
    sample = rng.sample(list(records), min(CONTEXT_EXCERPT_LIMIT, len(records)))
    lines = [json.dumps(r.to_line_dict(), ensure_ascii=False) for r in sample]
    return (
        "Here are previously generated tasks for reference; produce new tasks that "
        "do not repeat them:\n" + "\n".join(lines) + "\n\n"
    )


def _generation_prompt(spec: GenerationBatchSpec) -> str:
    domain_list = ", ".join(spec.domains)
    return (
        f"{_format_context(spec.context, spec.seed)}"
        f"Write exactly {spec.count} robot task descriptions as JSON lines.\n"
        "Each line must be a single JSON object with these keys:\n"
        f'  "text": the natural-language task, one or two sentences;\n'
        f'  "skills": {_skills_schema_line()} marking every physical capability the task requires;\n'
        f'  "domain": one of [{domain_list}].\n'
        "A skill is a differentiating physical capability (a robot class either has it or "
        "not); mark every skill the task genuinely needs and no others. Every task needs "
        "at least one skill. Cover the listed domains broadly. Output the JSON lines only, "
        "no prose, no code fences."
    )


def _iter_candidate_lines(raw: str):
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("```"):
            continue
        yield line


def _parse_generated_line(line: str) -> dict | None:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(raw, dict) or any(key not in _RECORD_KEYS for key in raw):
        return None
    return raw


def generate_tasks(spec: GenerationBatchSpec, client: ChatClient) -> GenerationOutcome:
    """Request one batch of labelled tasks and keep only the lines that validate.

    Every kept record carries ``source = provider name`` and a fresh id from
    the spec's prefix/start; the model's own id/source/split fields, if any,
    are discarded by contract.

    Raises:
        TransportError: provider unreachable after its retry budget.
        GenerationFailedError: nothing in the response parsed.
    """
    result: ChatResult = client.complete(
        GENERATION_SYSTEM_PROMPT, _generation_prompt(spec), spec.provider
    )
    prefix = spec.id_prefix or f"{spec.provider.name}-"
    records: list[TaskRecord] = []
    dropped = 0
    for line in _iter_candidate_lines(result.text):
        raw = _parse_generated_line(line)
        if raw is None:
            dropped += 1
            continue
        candidate = {
            "id": f"{prefix}{spec.id_start + len(records):05d}",
            "text": raw.get("text"),
            "skills": raw.get("skills"),
            "domain": raw.get("domain"),
            "source": spec.provider.name,
            "split": None,
        }
        try:
            records.append(validate_task_record(candidate))
        except ValidationError:
            dropped += 1
    if not records:
        raise GenerationFailedError("no parseable records in provider response", result.text[:400])
    records = records[: spec.count]
    return GenerationOutcome(
        records=tuple(records),
        requested=spec.count,
        parsed=len(records),
        dropped=dropped,
        provider=spec.provider.name,
    )


# -- boundary batches ---------------------------------------------------


@dataclass(frozen=True)
class BoundarySpec:
    """Three-arm disambiguation batch for one confusable skill pair."""

    skill_a: str
    skill_b: str
    a_only: int
    b_only: int
    both: int
    cue_a: str = ""
    cue_b: str = ""
    cue_both: str = ""
    seed: int = 0
    id_prefix: str = "boundary-"
    id_start: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "skill_a", normalize_skill_name(self.skill_a))
        object.__setattr__(self, "skill_b", normalize_skill_name(self.skill_b))
        if self.skill_a == self.skill_b:
            raise ArgumentError("boundary pair must name two different skills")
        if min(self.a_only, self.b_only, self.both) < 0:
            raise ArgumentError("arm counts must be >= 0")
        if self.a_only + self.b_only + self.both == 0:
            raise ArgumentError("at least one arm count must be > 0")


def _boundary_prompt(count: int, need: Sequence[str], avoid: Sequence[str], cue: str) -> str:
    need_list = ", ".join(need)
    avoid_clause = (
        f" and must NOT require any of: {', '.join(avoid)}" if avoid else ""
    )
    cue_clause = f" Emphasize: {cue}." if cue else ""
    domain_list = ", ".join(DOMAINS)
    return (
        f"Write exactly {count} robot task descriptions as JSON lines.\n"
        'Each line must be a single JSON object with keys "text" and "domain" '
        f"(domain one of [{domain_list}]).\n"
        f"Every task must require exactly these physical capabilities: {need_list}"
        f"{avoid_clause}.{cue_clause} Make the wording clearly distinguish this "
        "requirement from the alternatives. Output the JSON lines only, no prose."
    )


def generate_boundary_tasks(
    spec: BoundarySpec, provider: ProviderProfile, client: ChatClient
) -> GenerationOutcome:
    """Generate the three arms of a boundary batch; labels are set by the arm.

    Arm fidelity is structural: an a-only record has bit a set and b unset,
    a both record has both set, and no other bits are ever set.
    """
    arms = (
        ("a_only", spec.a_only, (spec.skill_a,), (spec.skill_b,), spec.cue_a),
        ("b_only", spec.b_only, (spec.skill_b,), (spec.skill_a,), spec.cue_b),
        ("both", spec.both, (spec.skill_a, spec.skill_b), (), spec.cue_both),
    )
    records: list[TaskRecord] = []
    requested = 0
    dropped = 0
    for _, count, need, avoid, cue in arms:
        if count == 0:
            continue
        requested += count
        result = client.complete(
            GENERATION_SYSTEM_PROMPT, _boundary_prompt(count, need, avoid, cue), provider
        )
        label = SkillVector.from_names(need)
        arm_records: list[TaskRecord] = []
        for line in _iter_candidate_lines(result.text):
            raw = _parse_generated_line(line)
            if raw is None:
                dropped += 1
                continue
            candidate = {
                "id": f"{spec.id_prefix}{spec.id_start + len(records) + len(arm_records):05d}",
                "text": raw.get("text"),
                "skills": label.to_mapping(),
                "domain": raw.get("domain", "other"),
                "source": "boundary",
                "split": None,
            }
            try:
                arm_records.append(validate_task_record(candidate))
            except ValidationError:
                dropped += 1
        records.extend(arm_records[:count])
    if not records:
        raise GenerationFailedError("no parseable records in any boundary arm", "")
    return GenerationOutcome(
        records=tuple(records),
        requested=requested,
        parsed=len(records),
        dropped=dropped,
        provider="boundary",
    )


def select_weakest_boundary(report: BoundaryReport) -> tuple[str, str] | None:
    """The pair with the most attributed errors; None when there are no errors.

    Ties break toward the earlier pair in canonical skill order.
    """
    best: tuple[str, str] | None = None
    best_count = 0
    for a, b in SKILL_PAIRS:
        pair = (SKILLS[a], SKILLS[b])
        count = report.pair_counts.get(pair, 0)
        if count > best_count:
            best = pair
            best_count = count
    return best


# -- near-duplicate filtering ---------------------------------------------


def _token_set(text: str) -> frozenset[str]:
    return frozenset(_WORD_RE.findall(text.casefold()))


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union


def dedupe(
    records: Sequence[TaskRecord], threshold: float = DEFAULT_DEDUPE_THRESHOLD
) -> tuple[list[TaskRecord], list[TaskRecord]]:
    """Drop later records whose token-set Jaccard similarity reaches the threshold.

    Tokens are case-folded and punctuation-stripped. The earlier record always
    wins; kept + dropped partitions the input in order.

    Raises:
        ArgumentError: threshold outside (0, 1].
    """
    if not 0.0 < threshold <= 1.0:
        raise ArgumentError(f"dedupe threshold must lie in (0, 1], got {threshold}")
    kept: list[TaskRecord] = []
    kept_tokens: list[frozenset[str]] = []
    dropped: list[TaskRecord] = []
    for record in records:
        tokens = _token_set(record.text)
        if any(_jaccard(tokens, earlier) >= threshold for earlier in kept_tokens):
            dropped.append(record)
        else:
            kept.append(record)
            kept_tokens.append(tokens)
    return kept, dropped


# -- audit workflow ---------------------------------------------------------


@dataclass(frozen=True)
class AuditDecision:
    """One reviewer verdict for one task."""

    task_id: str
    verdict: str  # accept | reject | relabel
    relabel: SkillVector | None = None
    note: str = ""

    def __post_init__(self) -> None:
        if self.verdict not in ("accept", "reject", "relabel"):
            raise ValidationError(f'unknown verdict "{self.verdict}"')
        if self.verdict == "relabel":
            if self.relabel is None or not self.relabel.any():
                raise ValidationError("relabel requires a replacement with >= 1 positive skill")


@dataclass(frozen=True)
class AuditSummary:
    accepted: int
    rejected: int
    relabeled: int
    unreviewed: int

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "relabeled": self.relabeled,
            "unreviewed": self.unreviewed,
        }


def sample_for_audit(records: Sequence[TaskRecord], n: int, seed: int) -> list[TaskRecord]:
    """Uniform sample without replacement; deterministic for a given seed."""
    if n > len(records):
        raise ArgumentError(f"cannot sample {n} of {len(records)} records")
    if n < 0:
        raise ArgumentError("sample size must be >= 0")
    return random.Random(seed).sample(list(records), n)


def write_audit_worksheet(records: Sequence[TaskRecord], path: str | Path) -> None:
    """Write the human-edited worksheet: dataset lines plus empty verdict fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            line = record.to_line_dict()
            line["verdict"] = None
            line["relabel_skills"] = None
            line["note"] = ""
            handle.write(json.dumps(line, ensure_ascii=False))
            handle.write("\n")


def read_audit_worksheet(path: str | Path) -> list[AuditDecision]:
    """Parse reviewer verdicts; lines left at verdict null are skipped."""
    decisions: list[AuditDecision] = []
    problems: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                problems.append(f"line {lineno}: invalid JSON ({err.msg})")
                continue
            verdict = raw.get("verdict")
            if verdict is None:
                continue
            relabel = None
            try:
                if raw.get("relabel_skills") is not None:
                    relabel = SkillVector.from_mapping(
                        raw["relabel_skills"], context="relabel_skills"
                    )
                decisions.append(
                    AuditDecision(
                        task_id=str(raw.get("id", "")),
                        verdict=verdict,
                        relabel=relabel,
                        note=str(raw.get("note", "") or ""),
                    )
                )
            except ValidationError as err:
                problems.extend(f"line {lineno}: {v}" for v in err.violations)
    if problems:
        raise ValidationError(problems)
    return decisions


def apply_audit(
    records: Sequence[TaskRecord], decisions: Sequence[AuditDecision]
) -> tuple[list[TaskRecord], AuditSummary]:
    """Fold reviewer decisions into the record list.

    Rejects are removed, relabels replace only the skill vector, undecided
    records pass through unchanged. Order is preserved.

    Raises:
        ArgumentError: decision for an unknown id, or two decisions for one id.
    """
    by_id: dict[str, AuditDecision] = {}
    for decision in decisions:
        if decision.task_id in by_id:
            raise ArgumentError(f'duplicate decision for id "{decision.task_id}"')
        by_id[decision.task_id] = decision
    known = {record.id for record in records}
    unknown = sorted(set(by_id) - known)
    if unknown:
        raise ArgumentError(f"decisions reference unknown ids: {unknown}")

    output: list[TaskRecord] = []
    accepted = rejected = relabeled = 0
    for record in records:
        decision = by_id.get(record.id)
        if decision is None:
            output.append(record)
        elif decision.verdict == "reject":
            rejected += 1
        elif decision.verdict == "relabel":
            assert decision.relabel is not None
            output.append(replace(record, skills=decision.relabel))
            relabeled += 1
        else:
            output.append(record)
            accepted += 1
    summary = AuditSummary(
        accepted=accepted,
        rejected=rejected,
        relabeled=relabeled,
        unreviewed=len(records) - accepted - rejected - relabeled,
    )
    return output, summary
