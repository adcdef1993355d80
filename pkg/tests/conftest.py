"""Shared fixtures: deterministic lexical-cue dataset, stub models, canned clients.

The fixture dataset is fully separable by token identity: every positive skill
contributes two cue words drawn from a skill-specific vocabulary, while verbs
and tails are shared noise. A hashed bag-of-words model can therefore reach
perfect exact match on it, which the pipeline-level tests rely on.
"""

from __future__ import annotations

import pytest
import torch

from skillroute.core import DOMAINS, NUM_SKILLS, SkillVector, TaskRecord
from skillroute.model import (
    ClassifierHead,
    HashingBackend,
    MemberModel,
    PredictionResult,
    apply_thresholds,
)

SKILL_CUES = {
    "fly": ["aerial", "altitude", "airborne", "rotor", "skyward"],
    "legs": ["stairs", "rubble", "stepping", "footing", "ledges"],
    "wheels": ["rolling", "paved", "axle", "curbside", "freight"],
    "hands": ["grasp", "valve", "fasten", "handle", "gripper"],
    "under_water": ["submerged", "seabed", "dive", "hull", "silt"],
    "surface_water": ["buoy", "raft", "skiff", "jetty", "wake"],
}

VERBS = ["Go", "Proceed", "Head out", "Move", "Start"]

TAILS = [
    "and check the site",
    "and log the findings",
    "and sweep the area",
    "and report back",
    "and close out the job",
    "and verify the markers",
    "and complete the round",
    "and confirm the checklist",
    "then stand by",
    "then return to base",
]

# 12 combinations x 10 records = the 120-task training fixture.
FIXTURE_COMBOS = [
    ("fly",),
    ("legs",),
    ("wheels",),
    ("hands",),
    ("under_water",),
    ("surface_water",),
    ("fly", "hands"),
    ("legs", "wheels"),
    ("legs", "hands"),
    ("under_water", "surface_water"),
    ("wheels", "hands"),
    ("fly", "under_water"),
]


def build_fixture_records(
    n_per_combo: int = 10, tail_offset: int = 0, prefix: str = "fx"
) -> list[TaskRecord]:
    records: list[TaskRecord] = []
    index = 0
    for combo in FIXTURE_COMBOS:
        for j in range(n_per_combo):
            cues = " ".join(
                f"{SKILL_CUES[s][j % 5]} {SKILL_CUES[s][(j + 2) % 5]}" for s in combo
            )
            text = f"{VERBS[j % len(VERBS)]} {cues} {TAILS[(j + tail_offset) % len(TAILS)]}"
            records.append(
                TaskRecord(
                    id=f"{prefix}-{index:04d}",
                    text=text,
                    skills=SkillVector.from_names(combo),
                    domain=DOMAINS[index % len(DOMAINS)],
                    source="fixture",
                )
            )
            index += 1
    return records


@pytest.fixture(scope="session")
def fixture_records() -> list[TaskRecord]:
    return build_fixture_records()


@pytest.fixture(scope="session")
def heldout_records() -> list[TaskRecord]:
    return build_fixture_records(n_per_combo=3, tail_offset=5, prefix="hx")


@pytest.fixture(scope="session")
def trained_member(fixture_records):
    """One member trained on the fixture; shared to keep the suite fast."""
    from skillroute.training import TrainConfig, train_member

    config = TrainConfig(seed=7, epochs=200, patience=200)
    model, report = train_member(config, fixture_records, HashingBackend())
    return model, report


def make_biased_member(bias=(4.0, -4.0, -4.0, -4.0, -4.0, -4.0), name="stub-fly") -> MemberModel:
    """Member whose final layer ignores the input: constant confident logits."""
    torch.manual_seed(0)
    backend = HashingBackend()
    head = ClassifierHead(backend.dim)
    with torch.no_grad():
        final = head.net[-1]
        final.weight.zero_()
        final.bias.copy_(torch.tensor(bias, dtype=torch.float32))
    return MemberModel(backend=backend, head=head, name=name)


class StubMember:
    """Duck-typed ensemble member returning fixed probabilities."""

    def __init__(self, probabilities):
        self.probabilities = tuple(float(p) for p in probabilities)

    def predict(self, text: str) -> PredictionResult:
        return PredictionResult(
            probabilities=self.probabilities,
            skills=apply_thresholds(self.probabilities, (0.5,) * NUM_SKILLS),
            member_probabilities=(self.probabilities,),
            latency_ms=0.0,
        )
