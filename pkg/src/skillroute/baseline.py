"""Zero-shot LLM baseline: one fixed prompt, structured-output parsing, scoring.

Every provider sees the identical prompt template (versioned; cite results by
``template_hash()``) at decode temperature 0. Responses that fail to parse are
scored as all-zero predictions and counted separately, so the reported exact
match is total over the input: harsher than dropping failures, never inflated.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from skillroute import evaluation
from skillroute.core import (
    SKILL_INDEX,
    SKILLS,
    ArgumentError,
    SkillrouteError,
    SkillVector,
    TaskRecord,
)
from skillroute.providers import ChatClient, ProviderProfile, TransportError

PROMPT_TEMPLATE_ID = "zero-shot-v1"

SYSTEM_PROMPT = "You map robot task descriptions to required physical capabilities."

SKILL_DEFINITIONS: dict[str, str] = {
    "fly": "airborne operation; lifting off and working above the ground",
    "legs": "legged locomotion; stairs, rubble, rough or uneven terrain",
    "wheels": "wheeled locomotion; fast or heavy movement over even ground",
    "hands": "manipulation; grasping, turning, carrying, or operating objects",
    "under_water": "submerged operation below the water surface",
    "surface_water": "operation on the water surface",
}

# Exactly one occurrence of each canonical skill name, in canonical order.
SCHEMA_BLOCK = "{\n" + ",\n".join(f'  "{name}": true or false' for name in SKILLS) + "\n}"

_DEFINITION_BLOCK = "\n".join(f"- {name}: {text}" for name, text in SKILL_DEFINITIONS.items())

PROMPT_TEMPLATE = (
    "Decide which physical capabilities a robot needs to execute the task below.\n"
    "A capability is a differentiating physical capability: a robot class either has\n"
    "it or it does not. Universal equipment (cameras, GPS, onboard compute) is never\n"
    "listed. Mark every capability the task genuinely requires and no others.\n"
    "\n"
    "Capability definitions:\n"
    f"{_DEFINITION_BLOCK}\n"
    "\n"
    "Task: {text}\n"
    "\n"
    "Answer with a single JSON object of exactly six boolean fields in this shape,\n"
    "with no prose before or after it:\n"
    f"{SCHEMA_BLOCK}\n"
)


def template_hash() -> str:
    """Stable fingerprint of the full prompt asset (system + user template)."""
    blob = SYSTEM_PROMPT + "\n" + PROMPT_TEMPLATE
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def build_prompt(text: str) -> str:
    """Pure function of the task text; identical template for every provider."""
    if not isinstance(text, str) or not text.strip():
        raise ArgumentError("text must be non-empty")
    return PROMPT_TEMPLATE.replace("{text}", text)


# -- response parsing -----------------------------------------------------


class ParseError(SkillrouteError):
    """The response held no usable six-skill object; carries the raw text."""

    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(message)


def _balanced_spans(raw: str) -> list[str]:
    spans: list[str] = []
    length = len(raw)
    for start, char in enumerate(raw):
        if char != "{":
            continue
        depth = 0
        in_string = False
        escaped = False
        for end in range(start, length):
            c = raw[end]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
            elif c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    spans.append(raw[start : end + 1])
                    break
        # unbalanced tail: no span recorded for this start
    return spans


def _normalize_keys(obj: Mapping) -> dict[str, object]:
    normalized: dict[str, object] = {}
    for key, value in obj.items():
        canonical = str(key).strip().lower().replace(" ", "_").replace("-", "_")
        if canonical in SKILL_INDEX:
            normalized[canonical] = value
    return normalized


def _to_bool(name: str, value: object, raw: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise ParseError(f'non-boolean value for "{name}": {value!r}', raw)


def parse_skill_response(raw: str) -> SkillVector:
    """Extract the six-skill object from a model response.

    Tolerates code fences, surrounding prose, key-case variants, 0/1 and
    "true"/"false" values. When several complete objects appear they must
    agree; a broken object is ignored only if a clean one exists.

    Raises:
        ParseError: no object, missing key, non-boolean value, or conflicting
            objects; the exception carries the raw response.
    """
    candidates: list[dict[str, object]] = []
    for span in _balanced_spans(raw):
        try:
            obj = json.loads(span)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            normalized = _normalize_keys(obj)
            if normalized:
                candidates.append(normalized)
    if not candidates:
        raise ParseError("no structured skill object found in response", raw)

    vectors: list[SkillVector] = []
    first_error: ParseError | None = None
    best_partial: dict[str, object] = {}
    for candidate in candidates:
        missing = [name for name in SKILLS if name not in candidate]
        if missing:
            if len(candidate) > len(best_partial):
                best_partial = candidate
            continue
        try:
            bits = [_to_bool(name, candidate[name], raw) for name in SKILLS]
        except ParseError as err:
            first_error = first_error or err
            continue
        vectors.append(SkillVector.from_bits(bits))

    if not vectors:
        if first_error is not None:
            raise first_error
        missing = [name for name in SKILLS if name not in best_partial]
        raise ParseError(f"skill object missing key(s): {missing}", raw)
    if any(v != vectors[0] for v in vectors[1:]):
        raise ParseError("multiple conflicting skill objects in response", raw)
    return vectors[0]


# -- harness ----------------------------------------------------------------


@dataclass(frozen=True)
class BaselineConfig:
    """Provider plus protocol knobs; retry policy lives on the profile."""

    provider: ProviderProfile
    template_id: str = PROMPT_TEMPLATE_ID
    max_parallel: int = 2

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ArgumentError("max_parallel must be >= 1")


@dataclass(frozen=True)
class RawExchange:
    """Everything needed to re-score one call offline."""

    task_id: str
    prompt: str
    response: str
    attempts: int
    latency_s: float
    backoff_s: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "prompt": self.prompt,
            "response": self.response,
            "attempts": self.attempts,
            "latency_s": self.latency_s,
            "backoff_s": self.backoff_s,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RawExchange":
        return cls(
            task_id=str(raw["task_id"]),
            prompt=str(raw["prompt"]),
            response=str(raw["response"]),
            attempts=int(raw["attempts"]),
            latency_s=float(raw["latency_s"]),
            backoff_s=float(raw["backoff_s"]),
            error=raw.get("error"),
        )


@dataclass(frozen=True)
class BaselineRun:
    predictions: tuple[SkillVector, ...]
    exchanges: tuple[RawExchange, ...]
    report: evaluation.MetricsReport
    parse_errors: int
    transport_failures: int


def run_baseline(
    config: BaselineConfig, records: Sequence[TaskRecord], client: ChatClient
) -> BaselineRun:
    """One call per record; every record yields exactly one scored prediction.

    Transport failures (after the profile's retry budget) and parse failures
    both score as all-zeros and are flagged on their exchanges; metrics cover
    all n inputs.
    """
    if not records:
        raise ArgumentError("need at least one record to score")
    profile = dataclasses.replace(config.provider, temperature=0.0)

    def call(record: TaskRecord) -> tuple[RawExchange, SkillVector]:
        prompt = build_prompt(record.text)
        try:
            result = client.complete(SYSTEM_PROMPT, prompt, profile)
        except TransportError as err:
            exchange = RawExchange(
                task_id=record.id,
                prompt=prompt,
                response="",
                attempts=err.attempts or profile.max_attempts,
                latency_s=0.0,
                backoff_s=0.0,
                error=f"transport: {err}",
            )
            return exchange, SkillVector.zeros()
        try:
            vector = parse_skill_response(result.text)
            error = None
        except ParseError as err:
            vector = SkillVector.zeros()
            error = f"parse: {err}"
        exchange = RawExchange(
            task_id=record.id,
            prompt=prompt,
            response=result.text,
            attempts=result.attempts,
            latency_s=result.latency_s,
            backoff_s=result.backoff_s,
            error=error,
        )
        return exchange, vector

    if config.max_parallel == 1:
        outcomes = [call(record) for record in records]
    else:
        with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
            outcomes = list(pool.map(call, records))

    exchanges = tuple(exchange for exchange, _ in outcomes)
    predictions = tuple(vector for _, vector in outcomes)
    report = evaluation.metrics_report([r.skills for r in records], list(predictions))
    return BaselineRun(
        predictions=predictions,
        exchanges=exchanges,
        report=report,
        parse_errors=sum(1 for e in exchanges if e.error and e.error.startswith("parse:")),
        transport_failures=sum(
            1 for e in exchanges if e.error and e.error.startswith("transport:")
        ),
    )


# -- exchange log -------------------------------------------------------------


def write_exchange_log(exchanges: Sequence[RawExchange], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for exchange in exchanges:
            handle.write(json.dumps(exchange.to_dict(), ensure_ascii=False))
            handle.write("\n")


def read_exchange_log(path: str | Path) -> list[RawExchange]:
    exchanges: list[RawExchange] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                exchanges.append(RawExchange.from_dict(json.loads(line)))
    return exchanges


def rescore_exchanges(exchanges: Sequence[RawExchange]) -> list[SkillVector]:
    """Replay persisted responses through the parser; reproduces the run's scoring."""
    predictions: list[SkillVector] = []
    for exchange in exchanges:
        try:
            predictions.append(parse_skill_response(exchange.response))
        except ParseError:
            predictions.append(SkillVector.zeros())
    return predictions
