"""Fixed skill taxonomy, task records, dataset persistence, splits, and statistics.

The six-skill taxonomy is closed: every label and prediction in this toolkit is
a binary vector over (fly, legs, wheels, hands, under_water, surface_water), in
that canonical order. Datasets travel as UTF-8 JSON lines, one record per line;
see :func:`read_dataset` / :func:`write_dataset` for the wire rules.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

SKILLS: tuple[str, ...] = ("fly", "legs", "wheels", "hands", "under_water", "surface_water")
SKILL_INDEX: dict[str, int] = {name: i for i, name in enumerate(SKILLS)}
NUM_SKILLS = len(SKILLS)

# Closed domain-tag vocabulary; "other" is the catch-all for anything outside it.
DOMAINS: tuple[str, ...] = (
    "agriculture",
    "waterway operations",
    "underwater/marine",
    "outdoor/wilderness",
    "emergency/disaster",
    "urban infrastructure",
    "retail",
    "construction",
    "warehouse/logistics",
    "manufacturing",
    "office/commercial",
    "energy/utilities",
    "environmental/wildlife",
    "medical",
    "military/defense",
    "scientific research",
    "residential",
    "aerial operations",
    "mining/geology",
    "aerospace/space",
    "security/surveillance",
    "cross-domain generics",
)

SPLIT_VALUES: tuple[str, ...] = ("train", "test", "unassigned")

_RECORD_KEYS = frozenset({"id", "text", "skills", "domain", "source", "split"})
_NAME_SEP_RE = re.compile(r"[\s_-]+")


class SkillrouteError(Exception):
    """Base class for domain errors raised anywhere in this package."""


class ArgumentError(SkillrouteError):
    """An operation was called with arguments outside its contract."""


class ValidationError(SkillrouteError):
    """A record failed validation; ``violations`` lists every field-level problem."""

    def __init__(self, violations: Sequence[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DatasetError(SkillrouteError):
    """A dataset file failed to load; ``violations`` carry 1-based line numbers."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))


def normalize_skill_name(name: str) -> str:
    """Map a tolerant spelling ("Under Water", "under_water") to the canonical name.

    Raises:
        ValidationError: if the normalized name is not one of the six skills.
    """
    key = _NAME_SEP_RE.sub("_", str(name).strip().lower())
    if key not in SKILL_INDEX:
        raise ValidationError(f'unknown skill name: "{name}"')
    return key


@dataclass(frozen=True, order=True)
class SkillVector:
    """Binary vector over the six skills, indexed in canonical order."""

    bits: tuple[bool, bool, bool, bool, bool, bool]

    def __post_init__(self) -> None:
        if len(self.bits) != NUM_SKILLS:
            raise ValidationError(f"skill vector must have {NUM_SKILLS} bits, got {len(self.bits)}")
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    # -- constructors ------------------------------------------------

    @classmethod
    def zeros(cls) -> "SkillVector":
        return cls((False,) * NUM_SKILLS)

    @classmethod
    def from_bits(cls, bits: Sequence[bool | int]) -> "SkillVector":
        return cls(tuple(bool(b) for b in bits))

    @classmethod
    def from_names(cls, names) -> "SkillVector":
        """Build a vector with exactly the named bits set.

        Names are case-insensitive and tolerate spaces/hyphens for underscores.
        Unknown names raise a ValidationError naming every offending string.
        """
        bits = [False] * NUM_SKILLS
        bad: list[str] = []
        for name in names:
            try:
                bits[SKILL_INDEX[normalize_skill_name(name)]] = True
            except ValidationError as err:
                bad.extend(err.violations)
        if bad:
            raise ValidationError(bad)
        return cls.from_bits(bits)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object], *, context: str = "skills") -> "SkillVector":
        """Parse the strict wire form: all six snake_case keys, boolean values."""
        if not isinstance(mapping, Mapping):
            raise ValidationError(f"{context} must be an object of six booleans")
        violations = [f'{context} has unknown key "{k}"' for k in mapping if k not in SKILL_INDEX]
        bits = [False] * NUM_SKILLS
        for i, name in enumerate(SKILLS):
            if name not in mapping:
                violations.append(f'{context} missing key "{name}"')
                continue
            value = mapping[name]
            if not isinstance(value, bool):
                violations.append(f"{context}.{name} must be a boolean, got {value!r}")
                continue
            bits[i] = value
        if violations:
            raise ValidationError(violations)
        return cls.from_bits(bits)

    # -- views -------------------------------------------------------

    def to_names(self) -> tuple[str, ...]:
        return tuple(name for name, bit in zip(SKILLS, self.bits) if bit)

    def to_mapping(self) -> dict[str, bool]:
        return {name: bit for name, bit in zip(SKILLS, self.bits)}

    def to_int_list(self) -> list[int]:
        return [int(b) for b in self.bits]

    def any(self) -> bool:
        return any(self.bits)

    def count(self) -> int:
        return sum(self.bits)

    def covers(self, required: "SkillVector") -> bool:
        """True when this vector has every bit that ``required`` has (superset)."""
        return all(have or not need for have, need in zip(self.bits, required.bits))

    def __getitem__(self, index: int) -> bool:
        return self.bits[index]

    def __iter__(self):
        return iter(self.bits)

    def __len__(self) -> int:
        return NUM_SKILLS


@dataclass(frozen=True)
class TaskRecord:
    """One labelled task: natural-language text plus its required-skill vector."""

    id: str
    text: str
    skills: SkillVector
    domain: str
    source: str
    split: str = "unassigned"

    def to_line_dict(self) -> dict:
        """Wire form for one dataset line; ``split`` serializes as null when unassigned."""
        return {
            "id": self.id,
            "text": self.text,
            "skills": self.skills.to_mapping(),
            "domain": self.domain,
            "source": self.source,
            "split": None if self.split == "unassigned" else self.split,
        }


def validate_task_record(raw: Mapping[str, object]) -> TaskRecord:
    """Validate one parsed dataset line into a TaskRecord.

    All field-level problems are collected before raising, so a caller sees
    every violation for the line at once.

    Raises:
        ValidationError: with one message per violation.
    """
    if not isinstance(raw, Mapping):
        raise ValidationError("record must be an object")
    violations = [f'unknown key "{k}"' for k in raw if k not in _RECORD_KEYS]

    record_id = raw.get("id")
    if "id" not in raw:
        violations.append('missing key "id"')
    elif not isinstance(record_id, str) or not record_id.strip():
        violations.append("id must be a non-empty string")

    text = raw.get("text")
    if "text" not in raw:
        violations.append('missing key "text"')
    elif not isinstance(text, str) or not text.strip():
        violations.append("text must be non-empty")

    skills: SkillVector | None = None
    if "skills" not in raw:
        violations.append('missing key "skills"')
    else:
        try:
            skills = SkillVector.from_mapping(raw["skills"])  # type: ignore[arg-type]
        except ValidationError as err:
            violations.extend(err.violations)
        else:
            if not skills.any():
                violations.append("label has no positive skill")

    domain = raw.get("domain")
    if "domain" not in raw:
        violations.append('missing key "domain"')
    elif domain not in DOMAINS and domain != "other":
        violations.append(f'unknown domain "{domain}"')

    source = raw.get("source")
    if "source" not in raw:
        violations.append('missing key "source"')
    elif not isinstance(source, str) or not source.strip():
        violations.append("source must be a non-empty string")

    split = raw.get("split")
    if split is None:
        split = "unassigned"
    if split not in SPLIT_VALUES:
        violations.append(f'unknown split value "{split}"')

    if violations:
        raise ValidationError(violations)
    assert skills is not None
    return TaskRecord(
        id=str(record_id),
        text=str(text),
        skills=skills,
        domain=str(domain),
        source=str(source),
        split=str(split),
    )


# -- dataset files ----------------------------------------------------


def read_dataset(path: str | Path) -> list[TaskRecord]:
    """Read a JSON-lines dataset, validating every line.

    Problems are aggregated (with 1-based line numbers) rather than failing on
    the first bad line; duplicate ids report both line numbers.

    Raises:
        DatasetError: when any line is malformed or any id repeats.
    """
    records: list[TaskRecord] = []
    problems: list[str] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                problems.append(f"line {lineno}: invalid JSON ({err.msg})")
                continue
            try:
                record = validate_task_record(raw)
            except ValidationError as err:
                problems.extend(f"line {lineno}: {v}" for v in err.violations)
                continue
            if record.id in seen:
                problems.append(
                    f'line {lineno}: duplicate id "{record.id}" (first seen on line {seen[record.id]})'
                )
                continue
            seen[record.id] = lineno
            records.append(record)
    if problems:
        raise DatasetError(problems)
    return records


def write_dataset(records: Sequence[TaskRecord], path: str | Path) -> None:
    """Write records as UTF-8 JSON lines; whole-file, single-writer."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record.to_line_dict(), ensure_ascii=False))
            handle.write("\n")


# -- splits ------------------------------------------------------------


def stratified_split(
    records: Sequence[TaskRecord], test_count: int, seed: int
) -> tuple[list[TaskRecord], list[TaskRecord]]:
    """Deterministic train/test split stratified by full skill combination.

    Each combination's share of the test set matches its dataset share to
    within one record (largest-remainder allocation). A combination with at
    least two records always keeps one in train; singletons may land entirely
    in test. Returned records carry their split tag; input order is preserved.

    Raises:
        ArgumentError: unless 0 < test_count < len(records).
    """
    total = len(records)
    if test_count <= 0 or test_count >= total:
        raise ArgumentError(f"test_count must be in (0, {total}), got {test_count}")

    groups: dict[tuple[bool, ...], list[TaskRecord]] = {}
    for record in records:
        groups.setdefault(record.skills.bits, []).append(record)
    keys = sorted(groups)

    quotas = {key: test_count * len(groups[key]) / total for key in keys}
    caps = {key: len(groups[key]) - 1 if len(groups[key]) >= 2 else 1 for key in keys}
    alloc = {key: min(math.floor(quotas[key]), caps[key]) for key in keys}
    remaining = test_count - sum(alloc.values())

    # Largest fractional remainder first; combination key breaks ties.
    order = sorted(keys, key=lambda k: (-(quotas[k] - math.floor(quotas[k])), k))
    while remaining > 0:
        progressed = False
        for key in order:
            if remaining == 0:
                break
            if alloc[key] < caps[key]:
                alloc[key] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            # Caps exhausted (degenerate shapes); fill from whole groups.
            for key in order:
                if remaining == 0:
                    break
                room = len(groups[key]) - alloc[key]
                take = min(room, remaining)
                alloc[key] += take
                remaining -= take
            break

    rng = random.Random(seed)
    test_ids: set[str] = set()
    for key in keys:
        members = sorted(groups[key], key=lambda r: r.id)
        if alloc[key]:
            for index in rng.sample(range(len(members)), alloc[key]):
                test_ids.add(members[index].id)

    train: list[TaskRecord] = []
    test: list[TaskRecord] = []
    for record in records:
        if record.id in test_ids:
            test.append(replace(record, split="test"))
        else:
            train.append(replace(record, split="train"))
    return train, test


# -- statistics --------------------------------------------------------


def combination_key(skills: SkillVector) -> str:
    """Stable histogram key: positive skill names joined in canonical order."""
    names = skills.to_names()
    return "+".join(names) if names else "(none)"


@dataclass(frozen=True)
class DatasetStats:
    """Counts over a record list; all histograms sum back to ``total``."""

    total: int
    skill_positive: dict[str, int]
    skill_negative: dict[str, int]
    combination_count: int
    combination_histogram: dict[str, int]
    domain_counts: dict[str, int]
    split_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "skill_positive": dict(self.skill_positive),
            "skill_negative": dict(self.skill_negative),
            "combination_count": self.combination_count,
            "combination_histogram": dict(self.combination_histogram),
            "domain_counts": dict(self.domain_counts),
            "split_counts": dict(self.split_counts),
        }


def dataset_stats(records: Sequence[TaskRecord]) -> DatasetStats:
    """Per-skill, per-combination, per-domain, and per-split counts."""
    positive = {name: 0 for name in SKILLS}
    combos: Counter[str] = Counter()
    domains: Counter[str] = Counter()
    splits = {name: 0 for name in SPLIT_VALUES}
    for record in records:
        for name, bit in zip(SKILLS, record.skills.bits):
            positive[name] += int(bit)
        combos[combination_key(record.skills)] += 1
        domains[record.domain] += 1
        splits[record.split] += 1
    total = len(records)
    return DatasetStats(
        total=total,
        skill_positive=positive,
        skill_negative={name: total - positive[name] for name in SKILLS},
        combination_count=len(combos),
        combination_histogram=dict(sorted(combos.items())),
        domain_counts=dict(sorted(domains.items())),
        split_counts=splits,
    )
