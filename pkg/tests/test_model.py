from __future__ import annotations

import random

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from skillroute.core import ArgumentError, SkillVector
from skillroute.model import (
    BundleError,
    ClassifierHead,
    EnsembleModel,
    HashingBackend,
    MemberModel,
    TokenEncoding,
    apply_thresholds,
    default_hidden_dims,
    embed,
    head_forward,
    load_bundle,
    mean_pool,
    save_bundle,
)
from tests.conftest import StubMember, make_biased_member

PROBE_TEXTS = [
    "inspect the underside of the bridge for cracks",
    "carry crates across the depot floor",
    "dive to the seabed and photograph the hull",
    "climb the stairwell and open the valve",
    "patrol the jetty at dawn",
]


class TestMeanPooling:
    def test_single_token_identity(self):
        token = torch.randn(1, 8)
        assert torch.equal(mean_pool(token, torch.ones(1)), token[0])

    def test_mask_excludes_tokens(self):
        tokens = torch.stack([torch.full((4,), 2.0), torch.full((4,), 9.0)])
        pooled = mean_pool(tokens, torch.tensor([1.0, 0.0]))
        assert torch.equal(pooled, tokens[0])

    def test_matches_elementwise_mean(self):
        torch.manual_seed(1)
        tokens = torch.randn(3, 5, dtype=torch.float64)
        pooled = mean_pool(tokens, torch.ones(3, dtype=torch.float64))
        brute = torch.tensor(
            [sum(float(tokens[t, d]) for t in range(3)) / 3 for d in range(5)],
            dtype=torch.float64,
        )
        assert torch.allclose(pooled, brute, atol=1e-12)

    def test_invariant_to_appended_masked_tokens(self):
        torch.manual_seed(2)
        tokens = torch.randn(4, 6)
        mask = torch.tensor([1.0, 1.0, 0.0, 1.0])
        base = mean_pool(tokens, mask)
        extended = torch.cat([tokens, torch.randn(3, 6)])
        extended_mask = torch.cat([mask, torch.zeros(3)])
        assert torch.equal(mean_pool(extended, extended_mask), base)

    def test_all_masked_is_an_error(self):
        with pytest.raises(ArgumentError):
            mean_pool(torch.randn(2, 3), torch.zeros(2))


class TestEmbed:
    def test_rejects_empty_text(self):
        backend = HashingBackend()
        with pytest.raises(ArgumentError):
            embed(backend, "   ")

    def test_truncation_flagged_not_fatal(self):
        backend = HashingBackend(max_tokens=4)
        pooled = embed(backend, "one two three four five six")
        assert pooled.truncated is True
        assert pooled.vector.shape == (backend.dim,)

    def test_hashing_is_process_independent(self):
        # blake2b-based hashing: same text, same vector, every run
        a = embed(HashingBackend(), "lift the crate onto the shelf").vector
        b = embed(HashingBackend(), "lift the crate onto the shelf").vector
        assert torch.equal(a, b)


class TestClassifierHead:
    def test_hidden_dims_cap(self):
        assert default_hidden_dims(768) == (512, 256, 128)
        assert default_hidden_dims(100) == (200, 200, 128)

    def test_zero_final_layer_gives_half_probabilities(self):
        head = ClassifierHead(16)
        with torch.no_grad():
            head.net[-1].weight.zero_()
            head.net[-1].bias.zero_()
        logits = head_forward(head, torch.randn(16), "eval")
        assert torch.equal(logits, torch.zeros(6))
        assert torch.sigmoid(logits).tolist() == [0.5] * 6

    def test_eval_mode_deterministic(self):
        head = ClassifierHead(16)
        x = torch.randn(16)
        assert torch.equal(head_forward(head, x, "eval"), head_forward(head, x, "eval"))

    def test_train_mode_dropout_reproducible_under_seed(self):
        head = ClassifierHead(16)
        x = torch.randn(4, 16)
        torch.manual_seed(123)
        first = head_forward(head, x, "train")
        torch.manual_seed(123)
        second = head_forward(head, x, "train")
        assert torch.equal(first, second)

    def test_dimension_mismatch(self):
        head = ClassifierHead(16)
        with pytest.raises(ArgumentError):
            head_forward(head, torch.randn(8), "eval")

    def test_unknown_mode(self):
        head = ClassifierHead(16)
        with pytest.raises(ArgumentError):
            head_forward(head, torch.randn(16), "predict")


class TestThresholds:
    def test_tie_predicts_positive(self):
        vector = apply_thresholds([0.5] * 6, [0.5] * 6)
        assert vector.to_int_list() == [1] * 6

    def test_just_below_threshold(self):
        probs = [0.9, 0.5, 0.5, 0.5, 0.5, 0.5]
        taus = [0.95, 0.5, 0.5, 0.5, 0.5, 0.5]
        assert apply_thresholds(probs, taus).to_int_list() == [0, 1, 1, 1, 1, 1]

    def test_brute_force_equivalence(self):
        rng = random.Random(9)
        for _ in range(1000):
            probs = [rng.random() for _ in range(6)]
            taus = [min(max(rng.random(), 1e-6), 1 - 1e-6) for _ in range(6)]
            got = apply_thresholds(probs, taus).to_int_list()
            want = [1 if probs[i] >= taus[i] else 0 for i in range(6)]
            assert got == want

    def test_threshold_bounds_enforced(self):
        with pytest.raises(ArgumentError):
            apply_thresholds([0.5] * 6, [0.0] + [0.5] * 5)
        with pytest.raises(ArgumentError):
            apply_thresholds([0.5] * 5, [0.5] * 6)

    @given(
        st.lists(st.floats(0, 1), min_size=6, max_size=6),
        st.floats(0.05, 0.95),
        st.floats(0.0, 0.4),
    )
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_threshold(self, probs, tau, bump):
        lower = apply_thresholds(probs, [tau] * 6)
        higher = apply_thresholds(probs, [min(tau + bump, 0.999)] * 6)
        for low_bit, high_bit in zip(lower.bits, higher.bits):
            assert not (high_bit and not low_bit)


class TestMemberAndEnsemble:
    def test_member_saturated_logits(self):
        member = make_biased_member(bias=(-10.0,) * 6)
        result = member.predict("anything at all")
        assert all(p < 1e-4 for p in result.probabilities)
        assert result.skills.to_int_list() == [0] * 6

    def test_member_probability_threshold_contract(self):
        member = make_biased_member()
        result = member.predict("whatever text")
        expected = [1 if p >= 0.5 else 0 for p in result.probabilities]
        assert result.skills.to_int_list() == expected

    def test_single_member_ensemble_identical(self):
        member = StubMember((0.9, 0.2, 0.4, 0.6, 0.1, 0.5))
        ensemble = EnsembleModel(members=[member])
        single = ensemble.predict("x")
        assert single.probabilities == member.probabilities
        assert single.skills == member.predict("x").skills

    def test_two_identical_members_equal_one(self):
        member = StubMember((0.31, 0.72, 0.5, 0.18, 0.66, 0.04))
        one = EnsembleModel(members=[member]).predict("x")
        two = EnsembleModel(members=[member, member]).predict("x")
        assert one.probabilities == two.probabilities

    def test_mean_and_threshold(self):
        ensemble = EnsembleModel(members=[StubMember((0.6,) * 6), StubMember((0.3,) * 6)])
        result = ensemble.predict("x")
        assert result.probabilities == pytest.approx((0.45,) * 6)
        assert result.skills.to_int_list() == [0] * 6
        mixed = EnsembleModel(members=[StubMember((0.9,) * 6), StubMember((0.2,) * 6)])
        assert mixed.predict("x").skills.to_int_list() == [1] * 6

    def test_member_probabilities_carried(self):
        ensemble = EnsembleModel(members=[StubMember((0.8,) * 6), StubMember((0.2,) * 6)])
        result = ensemble.predict("x")
        assert result.member_probabilities == ((0.8,) * 6, (0.2,) * 6)

    def test_permutation_invariance(self):
        members = [StubMember((0.1, 0.9, 0.4, 0.3, 0.8, 0.2)), StubMember((0.7,) * 6),
                   StubMember((0.25, 0.5, 0.75, 0.1, 0.6, 0.9))]
        forward = EnsembleModel(members=members).predict("x").probabilities
        backward = EnsembleModel(members=members[::-1]).predict("x").probabilities
        assert forward == pytest.approx(backward, abs=1e-15)

    def test_zero_members_rejected(self):
        with pytest.raises(ArgumentError):
            EnsembleModel(members=[])


class TestBundles:
    def test_member_round_trip_bit_identical(self, tmp_path):
        member = make_biased_member()
        save_bundle(member, tmp_path / "m")
        loaded = load_bundle(tmp_path / "m")
        for text in PROBE_TEXTS * 4:
            assert loaded.predict(text).probabilities == member.predict(text).probabilities

    def test_ensemble_round_trip(self, tmp_path):
        ensemble = EnsembleModel(
            members=[make_biased_member(), make_biased_member(bias=(-2.0,) * 6)],
            thresholds=(0.4,) * 6,
        )
        save_bundle(ensemble, tmp_path / "e")
        loaded = load_bundle(tmp_path / "e")
        assert loaded.thresholds == (0.4,) * 6
        for text in PROBE_TEXTS:
            assert loaded.predict(text).probabilities == ensemble.predict(text).probabilities

    def test_missing_backend_named_in_error(self, tmp_path):
        member = make_biased_member()
        save_bundle(member, tmp_path / "m")
        manifest = (tmp_path / "m" / "manifest.json")
        manifest.write_text(manifest.read_text().replace('"hashing"', '"galactic"'))
        with pytest.raises(BundleError, match="galactic"):
            load_bundle(tmp_path / "m")

    def test_truncated_blob_is_integrity_error(self, tmp_path):
        member = make_biased_member()
        save_bundle(member, tmp_path / "m")
        blob = next((tmp_path / "m" / "tensors").glob("*.bin"))
        blob.write_bytes(blob.read_bytes()[:-8])
        with pytest.raises(BundleError, match="checksum|bytes"):
            load_bundle(tmp_path / "m")

    def test_corrupted_manifest(self, tmp_path):
        member = make_biased_member()
        save_bundle(member, tmp_path / "m")
        (tmp_path / "m" / "manifest.json").write_text("{not json", encoding="utf-8")
        with pytest.raises(BundleError, match="not valid JSON"):
            load_bundle(tmp_path / "m")

    def test_tampered_blob_fails_checksum(self, tmp_path):
        member = make_biased_member()
        save_bundle(member, tmp_path / "m")
        blob = next((tmp_path / "m" / "tensors").glob("*.bin"))
        data = bytearray(blob.read_bytes())
        data[0] ^= 0xFF
        blob.write_bytes(bytes(data))
        with pytest.raises(BundleError, match="checksum mismatch"):
            load_bundle(tmp_path / "m")


class TestHashingBackendEncoding:
    def test_mask_all_ones(self):
        encoding = HashingBackend().encode("move the crate now")
        assert encoding.mask.tolist() == [1.0] * 4

    def test_signed_unit_tokens(self):
        encoding = HashingBackend().encode("crate")
        row = encoding.embeddings[0]
        nonzero = row[row != 0]
        assert len(nonzero) == 1 and abs(float(nonzero[0])) == 1.0

    def test_token_encoding_dataclass_shape(self):
        encoding = HashingBackend(dim=32).encode("a b c")
        assert isinstance(encoding, TokenEncoding)
        assert encoding.embeddings.shape == (3, 32)
