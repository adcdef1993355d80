from __future__ import annotations

import json

import pytest

from skillroute.core import ArgumentError, SkillVector, ValidationError, validate_task_record
from skillroute.datagen import (
    AuditDecision,
    BoundarySpec,
    GenerationBatchSpec,
    GenerationFailedError,
    apply_audit,
    dedupe,
    generate_boundary_tasks,
    generate_tasks,
    read_audit_worksheet,
    sample_for_audit,
    select_weakest_boundary,
    write_audit_worksheet,
)
from skillroute.evaluation import mine_boundary_errors
from skillroute.providers import CannedChatClient, ProviderProfile, TransportError
from tests.conftest import build_fixture_records

PROFILE = ProviderProfile(name="provider-a", model="test-model")


def task_line(text, names, domain="agriculture"):
    return json.dumps(
        {"text": text, "skills": SkillVector.from_names(names).to_mapping(), "domain": domain}
    )


def canned_batch(lines):
    return CannedChatClient(["\n".join(lines)])


class TestGenerateTasks:
    def test_count_and_validation(self):
        lines = [
            task_line("Survey the orchard canopy from above", ["fly"]),
            task_line("Carry crates across the depot floor quickly", ["wheels"]),
            task_line("Climb the stairwell and read the gauge", ["legs"]),
            task_line("Pick ripe fruit from the lower branches", ["hands"]),
            task_line("Inspect the submerged intake pipe", ["under_water"]),
        ]
        spec = GenerationBatchSpec(provider=PROFILE, count=5)
        outcome = generate_tasks(spec, canned_batch(lines))
        assert outcome.parsed == 5 and outcome.dropped == 0
        for record in outcome.records:
            assert record.source == "provider-a"
            assert validate_task_record(record.to_line_dict()) == record

    def test_partial_parse_counts_drops(self):
        lines = [
            task_line("Survey the orchard canopy from above", ["fly"]),
            "not json at all",
            task_line("Climb the stairwell and read the gauge", ["legs"]),
            json.dumps({"text": "zero label", "skills": SkillVector.zeros().to_mapping(),
                        "domain": "retail"}),
            task_line("Pick ripe fruit from the lower branches", ["hands"]),
        ]
        spec = GenerationBatchSpec(provider=PROFILE, count=5)
        outcome = generate_tasks(spec, canned_batch(lines))
        assert outcome.parsed == 3 and outcome.dropped == 2

    def test_zero_parseable_raises_with_sample(self):
        spec = GenerationBatchSpec(provider=PROFILE, count=3)
        with pytest.raises(GenerationFailedError) as excinfo:
            generate_tasks(spec, canned_batch(["free-form refusal, no objects here"]))
        assert "refusal" in excinfo.value.raw_sample

    def test_chained_context_enters_prompt(self):
        context = build_fixture_records(n_per_combo=1)
        client = canned_batch([task_line("Ferry samples along the corridor", ["wheels"])])
        spec = GenerationBatchSpec(provider=PROFILE, count=1, context=tuple(context), seed=5)
        generate_tasks(spec, client)
        _, user_prompt = client.calls[0]
        assert "previously generated tasks" in user_prompt
        assert any(record.text in user_prompt for record in context)

    def test_transport_error_carries_attempts(self):
        spec = GenerationBatchSpec(provider=PROFILE, count=1)
        exhausted = CannedChatClient([])
        with pytest.raises(TransportError) as excinfo:
            generate_tasks(spec, exhausted)
        assert excinfo.value.attempts >= 1

    def test_fenced_output_tolerated(self):
        raw = "```json\n" + task_line("Hover over the weir gate", ["fly"]) + "\n```"
        spec = GenerationBatchSpec(provider=PROFILE, count=1)
        outcome = generate_tasks(spec, CannedChatClient([raw]))
        assert outcome.parsed == 1

    def test_invalid_spec(self):
        with pytest.raises(ArgumentError):
            GenerationBatchSpec(provider=PROFILE, count=0)
        with pytest.raises(ArgumentError):
            GenerationBatchSpec(provider=PROFILE, count=1, domains=("atlantis",))


class TestBoundaryTasks:
    def test_arm_labels_by_construction(self):
        client = CannedChatClient([
            json.dumps({"text": "Cross the boulder field to the ridge", "domain": "outdoor/wilderness"}),
            json.dumps({"text": "Speed along the aisle with a pallet", "domain": "warehouse/logistics"}),
            json.dumps({"text": "Patrol the park paths and the rocky shortcut", "domain": "security/surveillance"}),
        ])
        spec = BoundarySpec(skill_a="legs", skill_b="wheels", a_only=1, b_only=1, both=1)
        outcome = generate_boundary_tasks(spec, PROFILE, client)
        got = [record.skills.to_names() for record in outcome.records]
        assert got == [("legs",), ("wheels",), ("legs", "wheels")]
        assert all(record.source == "boundary" for record in outcome.records)

    def test_bits_outside_pair_always_zero(self):
        client = CannedChatClient([
            "\n".join(json.dumps({"text": f"Both-arm patrol variant {i}", "domain": "other"})
                      for i in range(2))
        ])
        spec = BoundarySpec(skill_a="fly", skill_b="hands", a_only=0, b_only=0, both=2)
        outcome = generate_boundary_tasks(spec, PROFILE, client)
        assert len(outcome.records) == 2
        for record in outcome.records:
            assert record.skills.to_names() == ("fly", "hands")

    def test_spec_validation(self):
        with pytest.raises(ArgumentError):
            BoundarySpec(skill_a="legs", skill_b="legs", a_only=1, b_only=0, both=0)
        with pytest.raises(ArgumentError):
            BoundarySpec(skill_a="legs", skill_b="wheels", a_only=0, b_only=0, both=0)
        with pytest.raises(ValidationError):
            BoundarySpec(skill_a="swim", skill_b="wheels", a_only=1, b_only=0, both=0)


class TestSelectWeakestBoundary:
    def _report(self, flips):
        truths, preds = [], []
        for names_true, names_pred in flips:
            truths.append(SkillVector.from_names(names_true))
            preds.append(SkillVector.from_names(names_pred))
        return mine_boundary_errors(truths, preds)

    def test_dominant_pair(self):
        flips = [({"legs"}, {"wheels"})] * 22 + [({"fly"}, {"fly", "hands", "wheels"})] * 12
        report = self._report(flips)
        assert report.total_errors == 34
        assert report.pair_counts[("legs", "wheels")] == 22
        assert select_weakest_boundary(report) == ("legs", "wheels")

    def test_no_errors_returns_none(self):
        report = self._report([({"fly"}, {"fly"})])
        assert select_weakest_boundary(report) is None

    def test_tie_break_canonical_order(self):
        flips = [({"fly"}, {"hands"})] * 3 + [({"legs"}, {"wheels"})] * 3
        report = self._report(flips)
        assert report.pair_counts[("fly", "hands")] == 3
        assert report.pair_counts[("legs", "wheels")] == 3
        assert select_weakest_boundary(report) == ("fly", "hands")


class TestDedupe:
    def _record(self, i, text):
        return validate_task_record({
            "id": f"d-{i}", "text": text,
            "skills": SkillVector.from_names({"fly"}).to_mapping(),
            "domain": "other", "source": "fixture", "split": None,
        })

    def test_identical_text_dropped(self):
        records = [self._record(0, "Fly over the field."), self._record(1, "Fly over the field.")]
        kept, dropped = dedupe(records, threshold=0.99)
        assert [r.id for r in kept] == ["d-0"]
        assert [r.id for r in dropped] == ["d-1"]

    def test_disjoint_texts_kept(self):
        records = [self._record(0, "Fly over the field."),
                   self._record(1, "Survey soil moisture by drone")]
        kept, dropped = dedupe(records, threshold=0.9)
        assert len(kept) == 2 and not dropped

    def test_token_permutation_detected_at_one(self):
        texts = [f"unique task wording number {i}" for i in range(10)]
        texts[4] = "Deliver the spare pump to dock nine"
        texts[7] = "to dock nine deliver the spare pump!"
        records = [self._record(i, t) for i, t in enumerate(texts)]
        kept, dropped = dedupe(records, threshold=1.0)
        assert [r.id for r in dropped] == ["d-7"]
        # brute-force pairwise check finds exactly that one pair
        def tokens(t):
            import re
            return frozenset(re.findall(r"[a-z0-9]+", t.casefold()))
        pairs = [
            (i, j)
            for i in range(10)
            for j in range(i + 1, 10)
            if tokens(texts[i]) == tokens(texts[j])
        ]
        assert pairs == [(4, 7)]

    def test_threshold_validated(self):
        with pytest.raises(ArgumentError):
            dedupe([], threshold=0.0)
        with pytest.raises(ArgumentError):
            dedupe([], threshold=1.5)

    def test_idempotent(self):
        records = [self._record(i, f"move pallet {i} to bay {i % 2}") for i in range(6)]
        kept, _ = dedupe(records, threshold=0.8)
        kept_again, dropped_again = dedupe(kept, threshold=0.8)
        assert kept_again == kept and not dropped_again


class TestAudit:
    def test_sample_deterministic_and_exact(self, fixture_records):
        first = sample_for_audit(fixture_records, 10, seed=4)
        second = sample_for_audit(fixture_records, 10, seed=4)
        assert first == second
        assert len({r.id for r in first}) == 10
        everything = sample_for_audit(fixture_records, len(fixture_records), seed=0)
        assert {r.id for r in everything} == {r.id for r in fixture_records}

    def test_sample_too_large(self, fixture_records):
        with pytest.raises(ArgumentError):
            sample_for_audit(fixture_records, len(fixture_records) + 1, seed=0)

    def test_worksheet_round_trip(self, tmp_path, fixture_records):
        path = tmp_path / "audit.jsonl"
        write_audit_worksheet(fixture_records[:5], path)
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert all(line["verdict"] is None for line in lines)
        assert read_audit_worksheet(path) == []  # all undecided

        lines[0]["verdict"] = "reject"
        lines[1]["verdict"] = "accept"
        lines[2]["verdict"] = "relabel"
        lines[2]["relabel_skills"] = SkillVector.from_names({"wheels"}).to_mapping()
        path.write_text("\n".join(json.dumps(line) for line in lines) + "\n")
        decisions = read_audit_worksheet(path)
        assert [d.verdict for d in decisions] == ["reject", "accept", "relabel"]
        assert decisions[2].relabel.to_names() == ("wheels",)

    def test_relabel_requires_positive_bit(self):
        with pytest.raises(ValidationError):
            AuditDecision(task_id="x", verdict="relabel", relabel=SkillVector.zeros())

    def test_paper_scale_counts(self):
        records = build_fixture_records(n_per_combo=25)  # 300 records
        decisions = [AuditDecision(task_id=r.id, verdict="reject") for r in records[:39]]
        kept, summary = apply_audit(records, decisions)
        assert len(kept) == 261
        assert summary.rejected == 39

    def test_relabel_changes_only_skills(self, fixture_records):
        target = fixture_records[0]
        decision = AuditDecision(
            task_id=target.id, verdict="relabel", relabel=SkillVector.from_names({"wheels"})
        )
        kept, summary = apply_audit(fixture_records, [decision])
        relabeled = next(r for r in kept if r.id == target.id)
        assert relabeled.skills.to_names() == ("wheels",)
        assert relabeled.text == target.text
        assert summary.relabeled == 1

    def test_empty_decisions_identity(self, fixture_records):
        kept, summary = apply_audit(fixture_records, [])
        assert kept == list(fixture_records)
        assert summary.unreviewed == len(fixture_records)

    def test_unknown_and_duplicate_decisions(self, fixture_records):
        with pytest.raises(ArgumentError, match="unknown ids"):
            apply_audit(fixture_records, [AuditDecision(task_id="ghost", verdict="accept")])
        dup = [AuditDecision(task_id=fixture_records[0].id, verdict="accept")] * 2
        with pytest.raises(ArgumentError, match="duplicate decision"):
            apply_audit(fixture_records, dup)

    def test_conservation(self, fixture_records):
        decisions = [
            AuditDecision(task_id=fixture_records[0].id, verdict="reject"),
            AuditDecision(task_id=fixture_records[1].id, verdict="reject"),
            AuditDecision(task_id=fixture_records[2].id, verdict="accept"),
        ]
        kept, _ = apply_audit(fixture_records, decisions)
        assert len(kept) == len(fixture_records) - 2
