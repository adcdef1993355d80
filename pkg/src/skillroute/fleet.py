"""Robot registry, skill-superset eligibility, routing, and assignment lifecycle.

A robot is eligible for a task when it is available and its skill set covers
every required skill. Routing is deliberately conservative: an all-zero
prediction or any required-skill probability below the review threshold sends
the task to a human queue instead of a robot.

Persistence is two files: the fleet file is the robot registry (written by
explicit add/remove operations) and the journal is an append-only log of
assignment transitions. Reloading replays the journal over the registry, so a
restarted service sees the same availability picture.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from skillroute.core import (
    ArgumentError,
    SkillrouteError,
    SkillVector,
    ValidationError,
)

logger = logging.getLogger(__name__)

DEFAULT_REVIEW_THRESHOLD = 0.65


class NotFoundError(SkillrouteError):
    """Referenced robot or assignment does not exist."""


class ConflictError(SkillrouteError):
    """The requested change collides with current state (robot already busy, ...)."""


class StateError(SkillrouteError):
    """Illegal assignment state transition."""


@dataclass(frozen=True)
class RobotSpec:
    """One robot: free-text type name plus the skills it has."""

    id: str
    type: str
    skills: SkillVector
    available: bool = True

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": self.type,
            "skills": list(self.skills.to_names()),
            "available": self.available,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RobotSpec":
        if not isinstance(raw.get("id"), str) or not raw["id"].strip():
            raise ValidationError("robot id must be a non-empty string")
        return cls(
            id=raw["id"],
            type=str(raw.get("type", "")),
            skills=SkillVector.from_names(raw.get("skills", [])),
            available=bool(raw.get("available", True)),
        )


@dataclass(frozen=True)
class Assignment:
    """Task-to-robot binding; proposed -> confirmed -> released, or cancelled."""

    id: str
    robot_id: str
    task_text: str
    state: str  # proposed | confirmed | released
    proposed_at: str
    confirmed_at: str | None = None
    released_at: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "robot_id": self.robot_id,
            "task_text": self.task_text,
            "state": self.state,
            "proposed_at": self.proposed_at,
            "confirmed_at": self.confirmed_at,
            "released_at": self.released_at,
        }


@dataclass(frozen=True)
class RoutingDecision:
    """Outcome of routing one text: routed, needs_review, or no_robot."""

    task_text: str
    required: SkillVector
    probabilities: tuple[float, ...]
    eligible: tuple[str, ...]
    status: str
    robot_id: str | None
    assignment_id: str | None
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "task_text": self.task_text,
            "required": self.required.to_mapping(),
            "probabilities": list(self.probabilities),
            "eligible": list(self.eligible),
            "status": self.status,
            "robot_id": self.robot_id,
            "assignment_id": self.assignment_id,
            "timestamp": self.timestamp,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class FleetState:
    """Robots plus assignments behind a single-writer lock.

    All mutations are serialized; reads copy, so a snapshot never sees a
    half-applied change. The optional journal receives one line per
    assignment transition, append-only.
    """

    def __init__(self, robots: Sequence[RobotSpec] = (), journal_path: str | Path | None = None):
        self._lock = threading.Lock()
        self._robots: dict[str, RobotSpec] = {}
        self._assignments: dict[str, Assignment] = {}
        self._sequence = 0
        self.journal_path = Path(journal_path) if journal_path else None
        for robot in robots:
            if robot.id in self._robots:
                raise ValidationError(f'duplicate robot id "{robot.id}"')
            self._robots[robot.id] = robot

    # -- registry ------------------------------------------------------

    def robots(self) -> list[RobotSpec]:
        with self._lock:
            return list(self._robots.values())

    def get_robot(self, robot_id: str) -> RobotSpec:
        with self._lock:
            robot = self._robots.get(robot_id)
        if robot is None:
            raise NotFoundError(f'unknown robot "{robot_id}"')
        return robot

    def add_robot(self, robot: RobotSpec) -> None:
        with self._lock:
            if robot.id in self._robots:
                raise ConflictError(f'robot "{robot.id}" already registered')
            self._robots[robot.id] = robot

    def remove_robot(self, robot_id: str) -> None:
        with self._lock:
            if robot_id not in self._robots:
                raise NotFoundError(f'unknown robot "{robot_id}"')
            del self._robots[robot_id]

    def assignments(self) -> list[Assignment]:
        with self._lock:
            return list(self._assignments.values())

    def get_assignment(self, assignment_id: str) -> Assignment:
        with self._lock:
            assignment = self._assignments.get(assignment_id)
        if assignment is None:
            raise NotFoundError(f'unknown assignment "{assignment_id}"')
        return assignment

    # -- persistence -----------------------------------------------------

    def registry_bytes(self) -> bytes:
        """Canonical fleet-file serialization of the robot registry."""
        with self._lock:
            robots = [robot.to_dict() for robot in self._robots.values()]
        return (json.dumps({"robots": robots}, indent=2, ensure_ascii=False) + "\n").encode(
            "utf-8"
        )

    def save_registry(self, path: str | Path) -> None:
        Path(path).write_bytes(self.registry_bytes())

    @classmethod
    def load(
        cls, path: str | Path, journal_path: str | Path | None = None
    ) -> "FleetState":
        """Load the registry file, then replay the journal over it (if present)."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict) or not isinstance(raw.get("robots"), list):
            raise ValidationError('fleet file must be an object with a "robots" list')
        fleet = cls(
            robots=[RobotSpec.from_dict(entry) for entry in raw["robots"]],
            journal_path=journal_path,
        )
        if journal_path and Path(journal_path).exists():
            fleet._replay_journal(Path(journal_path))
        return fleet

    def _journal(self, assignment: Assignment) -> None:
        if self.journal_path is None:
            return
        entry = {
            "assignment_id": assignment.id,
            "robot_id": assignment.robot_id,
            "task_text": assignment.task_text,
            "state": assignment.state,
            "timestamp": _now(),
        }
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.journal_path, "a", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(entry, ensure_ascii=False))
            handle.write("\n")

    def _replay_journal(self, path: Path) -> None:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                entry = json.loads(line)
                assignment_id = entry["assignment_id"]
                robot_id = entry["robot_id"]
                state = entry["state"]
                if robot_id not in self._robots:
                    logger.warning("journal references unknown robot %r; skipping", robot_id)
                    continue
                previous = self._assignments.get(assignment_id)
                self._assignments[assignment_id] = Assignment(
                    id=assignment_id,
                    robot_id=robot_id,
                    task_text=entry.get("task_text", ""),
                    state=state,
                    proposed_at=previous.proposed_at if previous else entry["timestamp"],
                    confirmed_at=entry["timestamp"] if state == "confirmed" else (
                        previous.confirmed_at if previous else None
                    ),
                    released_at=entry["timestamp"] if state == "released" else None,
                )
                if state == "confirmed":
                    self._robots[robot_id] = replace(self._robots[robot_id], available=False)
                elif state == "released" and previous and previous.state == "confirmed":
                    self._robots[robot_id] = replace(self._robots[robot_id], available=True)
                number = assignment_id.rsplit("-", 1)[-1]
                if number.isdigit():
                    self._sequence = max(self._sequence, int(number))

    # -- assignment lifecycle -------------------------------------------

    def propose(self, robot_id: str, task_text: str) -> Assignment:
        with self._lock:
            if robot_id not in self._robots:
                raise NotFoundError(f'unknown robot "{robot_id}"')
            self._sequence += 1
            assignment = Assignment(
                id=f"a-{self._sequence:04d}",
                robot_id=robot_id,
                task_text=task_text,
                state="proposed",
                proposed_at=_now(),
            )
            self._assignments[assignment.id] = assignment
            self._journal(assignment)
            return assignment

    def confirm(self, assignment_id: str) -> Assignment:
        """proposed -> confirmed; flips the robot unavailable.

        Confirming an already-confirmed assignment is a warned no-op (first
        confirm wins); confirming over another confirmed assignment on the
        same robot is a conflict.
        """
        with self._lock:
            assignment = self._assignments.get(assignment_id)
            if assignment is None:
                raise NotFoundError(f'unknown assignment "{assignment_id}"')
            if assignment.state == "confirmed":
                logger.warning("assignment %s already confirmed; no-op", assignment_id)
                return assignment
            if assignment.state == "released":
                raise StateError(f"cannot confirm released assignment {assignment_id}")
            robot = self._robots.get(assignment.robot_id)
            if robot is None:
                raise NotFoundError(f'unknown robot "{assignment.robot_id}"')
            busy = any(
                a.state == "confirmed" and a.robot_id == robot.id
                for a in self._assignments.values()
            )
            if busy or not robot.available:
                raise ConflictError(
                    f'robot "{robot.id}" is already committed to another assignment'
                )
            assignment = replace(assignment, state="confirmed", confirmed_at=_now())
            self._assignments[assignment_id] = assignment
            self._robots[robot.id] = replace(robot, available=False)
            self._journal(assignment)
            return assignment

    def release(self, assignment_id: str) -> Assignment:
        """confirmed -> released (frees the robot) or proposed -> released (cancel).

        Releasing a released assignment is a warned no-op.
        """
        with self._lock:
            assignment = self._assignments.get(assignment_id)
            if assignment is None:
                raise NotFoundError(f'unknown assignment "{assignment_id}"')
            if assignment.state == "released":
                logger.warning("assignment %s already released; no-op", assignment_id)
                return assignment
            was_confirmed = assignment.state == "confirmed"
            assignment = replace(assignment, state="released", released_at=_now())
            self._assignments[assignment_id] = assignment
            if was_confirmed:
                robot = self._robots.get(assignment.robot_id)
                if robot is not None:
                    self._robots[robot.id] = replace(robot, available=True)
            self._journal(assignment)
            return assignment


# -- eligibility and routing -------------------------------------------------


def eligible_robots(required: SkillVector, fleet: FleetState) -> list[str]:
    """Ids of available robots whose skills cover every required bit, ordered by id.

    All-zero requirements are normally intercepted upstream as needs_review;
    called directly, they match every available robot (empty subset).
    """
    return sorted(
        robot.id for robot in fleet.robots() if robot.available and robot.skills.covers(required)
    )


def least_capable_sufficient(candidates: Sequence[RobotSpec]) -> str:
    """Default selection policy: fewest skill bits, ties to the lowest id."""
    best = min(candidates, key=lambda robot: (robot.skills.count(), robot.id))
    return best.id


def route_task(
    text: str,
    model,
    fleet: FleetState,
    review_threshold: float = DEFAULT_REVIEW_THRESHOLD,
    policy: Callable[[Sequence[RobotSpec]], str] = least_capable_sufficient,
) -> RoutingDecision:
    """Predict required skills for a text and bind an eligible robot.

    needs_review when the prediction is all-zero or any required skill's
    probability falls below the review threshold; no_robot when nothing
    eligible is available; otherwise a proposed assignment is created for the
    policy's pick.
    """
    if model is None:
        raise ArgumentError("routing requires a loaded model")
    prediction = model.predict(text)
    required = prediction.skills
    probabilities = prediction.probabilities

    low_confidence = any(
        bit and probabilities[i] < review_threshold for i, bit in enumerate(required.bits)
    )
    if not required.any() or low_confidence:
        return RoutingDecision(
            task_text=text,
            required=required,
            probabilities=probabilities,
            eligible=(),
            status="needs_review",
            robot_id=None,
            assignment_id=None,
            timestamp=_now(),
        )

    eligible = eligible_robots(required, fleet)
    if not eligible:
        return RoutingDecision(
            task_text=text,
            required=required,
            probabilities=probabilities,
            eligible=(),
            status="no_robot",
            robot_id=None,
            assignment_id=None,
            timestamp=_now(),
        )

    candidates = [fleet.get_robot(robot_id) for robot_id in eligible]
    chosen = policy(candidates)
    assignment = fleet.propose(chosen, text)
    return RoutingDecision(
        task_text=text,
        required=required,
        probabilities=probabilities,
        eligible=tuple(eligible),
        status="routed",
        robot_id=chosen,
        assignment_id=assignment.id,
        timestamp=_now(),
    )
