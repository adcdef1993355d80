from __future__ import annotations

import dataclasses
import math
import random

import pytest
import torch

from skillroute.core import ArgumentError, SkillVector, TaskRecord
from skillroute.model import HashingBackend
from skillroute.training import (
    PosWeightResult,
    ThresholdSet,
    TrainConfig,
    compute_pos_weights,
    threshold_comparison,
    threshold_grid,
    train_member,
    tune_thresholds,
    tune_thresholds_on_probabilities,
    weighted_bce_loss,
)
from tests.conftest import StubMember, build_fixture_records


def _records_with_counts(fly_positives: int, total: int) -> list[TaskRecord]:
    records = []
    for i in range(total):
        names = {"fly"} if i < fly_positives else {"legs"}
        records.append(
            TaskRecord(id=f"w-{i}", text=f"task number {i}", skills=SkillVector.from_names(names),
                       domain="other", source="fixture")
        )
    return records


class TestPosWeights:
    def test_ratio_formula(self):
        result = compute_pos_weights(_records_with_counts(200, 1061))
        assert result.weights[0] == 861 / 200
        assert result.weights[0] == 4.305

    def test_balanced_skill_weight_one(self):
        result = compute_pos_weights(_records_with_counts(8, 16))
        assert result.weights[0] == 1.0

    def test_zero_positives_defaults_with_warning(self):
        result = compute_pos_weights(_records_with_counts(4, 8))
        wheels_index = 2
        assert result.weights[wheels_index] == 1.0
        assert any("wheels" in w for w in result.warnings)

    def test_clamping(self):
        result = compute_pos_weights(_records_with_counts(1, 500), clamp=(0.1, 100.0))
        assert result.weights[0] == 100.0

    def test_empty_input(self):
        with pytest.raises(ArgumentError):
            compute_pos_weights([])

    def test_result_type(self):
        assert isinstance(compute_pos_weights(_records_with_counts(1, 4)), PosWeightResult)


class TestWeightedBCE:
    def test_analytic_value_positive_target(self):
        loss = weighted_bce_loss(
            torch.zeros(1, 6), torch.ones(1, 6), torch.ones(6)
        )
        assert float(loss) == pytest.approx(math.log(2.0), rel=1e-6)

    def test_weight_applies_only_to_positive_term(self):
        logits = torch.zeros(1, 6)
        targets = torch.zeros(1, 6)
        heavy = weighted_bce_loss(logits, targets, torch.full((6,), 7.0))
        assert float(heavy) == pytest.approx(math.log(2.0), rel=1e-6)

    def test_matches_brute_force(self):
        torch.manual_seed(3)
        logits = torch.randn(8, 6, dtype=torch.float64) * 5
        targets = (torch.rand(8, 6, dtype=torch.float64) < 0.5).double()
        weights = torch.rand(6, dtype=torch.float64) * 3 + 0.1
        loss = float(weighted_bce_loss(logits, targets, weights))
        total = 0.0
        for b in range(8):
            for s in range(6):
                z = float(logits[b, s])
                y = float(targets[b, s])
                w = float(weights[s])
                sigma = 1.0 / (1.0 + math.exp(-z))
                total += -(w * y * math.log(sigma) + (1 - y) * math.log(1 - sigma))
        assert loss == pytest.approx(total / 48, rel=1e-9)

    def test_stable_at_extreme_logits(self):
        logits = torch.tensor([[100.0, -100.0, 50.0, -50.0, 0.0, 0.0]])
        targets = torch.tensor([[0.0, 1.0, 1.0, 0.0, 1.0, 0.0]])
        loss = weighted_bce_loss(logits, targets, torch.ones(6))
        assert torch.isfinite(loss)
        assert float(loss) > 0.0

    def test_all_ones_weights_equal_unweighted_exactly(self):
        torch.manual_seed(4)
        logits = torch.randn(5, 6)
        targets = (torch.rand(5, 6) < 0.5).float()
        weighted = weighted_bce_loss(logits, targets, torch.ones(6))
        unweighted = torch.nn.functional.binary_cross_entropy_with_logits(logits, targets)
        assert float(weighted) == pytest.approx(float(unweighted), rel=1e-6)

    def test_shape_checks(self):
        with pytest.raises(ArgumentError):
            weighted_bce_loss(torch.zeros(2, 6), torch.zeros(3, 6), torch.ones(6))
        with pytest.raises(ArgumentError):
            weighted_bce_loss(torch.zeros(2, 6), torch.zeros(2, 6), torch.ones(5))

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(5)
        for _ in range(10):
            logits = (torch.randn(3, 6, dtype=torch.float64) * 4).requires_grad_(True)
            targets = (torch.rand(3, 6, dtype=torch.float64) < 0.5).double()
            weights = torch.rand(6, dtype=torch.float64) * 2 + 0.2
            loss = weighted_bce_loss(logits, targets, weights)
            (grad,) = torch.autograd.grad(loss, logits)
            eps = 1e-6
            with torch.no_grad():
                for b in range(3):
                    for s in range(6):
                        bumped = logits.detach().clone()
                        bumped[b, s] += eps
                        up = float(weighted_bce_loss(bumped, targets, weights))
                        bumped[b, s] -= 2 * eps
                        down = float(weighted_bce_loss(bumped, targets, weights))
                        fd = (up - down) / (2 * eps)
                        assert float(grad[b, s]) == pytest.approx(fd, rel=1e-4, abs=1e-8)


class TestTrainMember:
    def test_too_small_dataset_rejected(self):
        records = build_fixture_records(n_per_combo=2)
        config = TrainConfig(batch_size=32)
        with pytest.raises(ArgumentError, match="two batches"):
            train_member(config, records[:40], HashingBackend())

    def test_report_internal_consistency(self, trained_member):
        _, report = trained_member
        assert report.epochs_run == len(report.train_loss) == len(report.inner_em)
        assert report.best_epoch <= report.epochs_run
        assert report.best_inner_em == max(report.inner_em)
        assert report.wall_time_s > 0

    def test_loss_positive(self, trained_member):
        _, report = trained_member
        assert all(loss >= 0 for loss in report.train_loss)
        assert report.train_loss[0] > 0

    def test_deterministic_given_seed(self):
        records = build_fixture_records(n_per_combo=6)  # 72 records, quick run
        config = TrainConfig(seed=11, epochs=8, patience=8)
        model_a, report_a = train_member(config, records, HashingBackend())
        model_b, report_b = train_member(config, records, HashingBackend())
        state_a, state_b = model_a.head.state_dict(), model_b.head.state_dict()
        assert all(torch.equal(state_a[k], state_b[k]) for k in state_a)
        assert dataclasses.replace(report_a, wall_time_s=0.0) == dataclasses.replace(
            report_b, wall_time_s=0.0
        )

    def test_early_stop_respects_patience(self):
        records = build_fixture_records(n_per_combo=6)
        config = TrainConfig(seed=1, epochs=200, patience=3)
        _, report = train_member(config, records, HashingBackend())
        assert report.epochs_run <= 200
        assert report.epochs_run - report.best_epoch <= config.patience


class TestThresholdGrid:
    def test_grid_contents(self):
        grid = threshold_grid(0.05)
        assert grid[0] == pytest.approx(0.05)
        assert grid[-1] == pytest.approx(0.95)
        assert 0.5 in grid
        assert len(grid) == 19

    def test_grid_bounds_validated(self):
        with pytest.raises(ArgumentError):
            threshold_grid(0.0)
        with pytest.raises(ArgumentError):
            threshold_grid(0.2)


class TestTuneThresholds:
    def test_separated_at_half_keeps_half(self):
        probabilities = [[0.9] * 6, [0.8] * 6, [0.1] * 6, [0.2] * 6]
        labels = [SkillVector.from_bits([1] * 6), SkillVector.from_bits([1] * 6),
                  SkillVector.from_bits([1, 0, 0, 0, 0, 0]), SkillVector.from_bits([1, 0, 0, 0, 0, 0])]
        # Skills 1..5: positives at {0.9, 0.8}, negatives at {0.1, 0.2}: 0.5 separates.
        tuned = tune_thresholds_on_probabilities(probabilities, labels, step=0.05)
        assert all(t == 0.5 for t in tuned.thresholds[1:])

    def test_tie_break_prefers_closest_to_half(self):
        # Positives >= 0.3, negatives <= 0.2: F1 is 1.0 at 0.25 and 0.3; 0.3 wins.
        probabilities = [[0.3] * 6, [0.45] * 6, [0.2] * 6, [0.05] * 6]
        labels = [SkillVector.from_bits([1] * 6), SkillVector.from_bits([1] * 6),
                  SkillVector.from_bits([1, 0, 0, 0, 0, 0]), SkillVector.from_bits([1, 0, 0, 0, 0, 0])]
        tuned = tune_thresholds_on_probabilities(probabilities, labels, step=0.05)
        assert tuned.thresholds[1] == pytest.approx(0.3)
        # Brute-force the grid: F1 hits 1.0 exactly at 0.25 and 0.3.
        perfect = []
        truth = [vec.bits[1] for vec in labels]
        for tau in threshold_grid(0.05):
            preds = [p[1] >= tau for p in probabilities]
            tp = sum(1 for y, p in zip(truth, preds) if y and p)
            fp = sum(1 for y, p in zip(truth, preds) if not y and p)
            fn = sum(1 for y, p in zip(truth, preds) if y and not p)
            f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0
            if f1 == 1.0:
                perfect.append(tau)
        assert perfect == [0.25, 0.3]

    def test_dominance_over_fixed_half(self):
        rng = random.Random(21)
        for _ in range(20):
            n = 30
            probabilities = [[rng.random() for _ in range(6)] for _ in range(n)]
            labels = [SkillVector.from_bits([rng.random() < 0.4 for _ in range(6)]) for _ in range(n)]
            tuned = tune_thresholds_on_probabilities(probabilities, labels, step=0.05)
            for name, entry in tuned.snapshot["per_skill"].items():
                assert entry["f1_tuned"] >= entry["f1_at_0.5"] - 1e-12

    def test_empty_split_rejected(self):
        with pytest.raises(ArgumentError):
            tune_thresholds_on_probabilities([], [], step=0.05)

    def test_model_level_wrapper(self):
        member = StubMember((0.9, 0.1, 0.9, 0.1, 0.9, 0.1))
        records = build_fixture_records(n_per_combo=1)[:4]
        tuned = tune_thresholds(member, records, step=0.1)
        assert isinstance(tuned, ThresholdSet)
        assert len(tuned.thresholds) == 6

    def test_threshold_comparison_reports_both(self, trained_member, heldout_records):
        model, _ = trained_member
        comparison = threshold_comparison(model, heldout_records, (0.4,) * 6)
        assert set(comparison) == {"n", "exact_match_fixed_0.5", "exact_match_tuned", "tuned_thresholds"}
        assert comparison["n"] == len(heldout_records)
        assert 0.0 <= comparison["exact_match_fixed_0.5"] <= 1.0
        assert 0.0 <= comparison["exact_match_tuned"] <= 1.0
