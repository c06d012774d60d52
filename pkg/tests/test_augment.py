import itertools

import pytest

from cirfocus.augment import (
    AugmentPlan,
    MockGenerationClient,
    SourceTriplet,
    TripletSource,
    apply_plan,
    mix_sources,
    plan_augmented_sample,
    select_in_sample_negatives,
)
from cirfocus.errors import InsufficientNegatives, SourceExhausted
from cirfocus.types import CandidateKind

from conftest import make_sample


def _triplet(i=0, source=TripletSource.EDITING_DRIVEN):
    return SourceTriplet(
        query_image=f"asset://img/{i}.png",
        query_text="make the car red",
        positive_image=f"asset://pos/{i}.png",
        source=source,
        triplet_id=f"tr{i}",
    )


class TestPlanOneSample:
    def test_editing_driven_default_pool(self):
        sample = plan_augmented_sample(_triplet(), AugmentPlan(), MockGenerationClient())
        kinds = [c.kind for c in sample.candidates]
        assert len(sample.candidates) == 5
        assert kinds.count(CandidateKind.POSITIVE) == 1
        assert kinds.count(CandidateKind.TEXT_AUG_NEGATIVE) == 1
        assert kinds.count(CandidateKind.IMAGE_AUG_NEGATIVE) == 1
        assert kinds.count(CandidateKind.IDENTITY_NEGATIVE) == 1
        assert kinds.count(CandidateKind.DISTRACTOR) == 1
        # the original positive is kept for editing-driven sources
        assert sample.candidate_by_id(sample.positive_id()).asset == "asset://pos/0.png"

    def test_similarity_paired_demotes_original(self):
        sample = plan_augmented_sample(
            _triplet(source=TripletSource.SIMILARITY_PAIRED),
            AugmentPlan(),
            MockGenerationClient(),
        )
        kinds = [c.kind for c in sample.candidates]
        assert len(sample.candidates) == 5
        assert kinds.count(CandidateKind.ORIGINAL_POSITIVE) == 1
        # positive was synthesized, not the source ref
        assert sample.candidate_by_id(sample.positive_id()).asset != "asset://pos/0.png"

    def test_identity_negative_is_query_image(self):
        sample = plan_augmented_sample(_triplet(), AugmentPlan(), MockGenerationClient())
        ident = [c for c in sample.candidates if c.kind is CandidateKind.IDENTITY_NEGATIVE]
        assert ident[0].asset == "asset://img/0.png"

    def test_counts_configurable(self):
        plan = AugmentPlan(text_aug_count=2, image_aug_count=0, identity_count=0, pool_size=4)
        sample = plan_augmented_sample(_triplet(), plan, MockGenerationClient())
        kinds = [c.kind for c in sample.candidates]
        assert kinds.count(CandidateKind.TEXT_AUG_NEGATIVE) == 2
        assert len(sample.candidates) == 4

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            AugmentPlan(text_aug_count=-1)
        with pytest.raises(ValueError):
            AugmentPlan(negative_ratio=1.5)


class TestApplyPlan:
    def test_ratio_selects_exact_count(self):
        triplets = [_triplet(i) for i in range(100)]
        plan = AugmentPlan(negative_ratio=0.5, seed=3)
        samples = apply_plan(triplets, plan, MockGenerationClient())
        augmented = [s for s in samples if len(s.candidates) > 1]
        assert len(augmented) == 50
        assert len(samples) == 100

    def test_ratio_zero_and_one(self):
        triplets = [_triplet(i) for i in range(10)]
        client = MockGenerationClient()
        none = apply_plan(triplets, AugmentPlan(negative_ratio=0.0), client)
        assert all(len(s.candidates) == 1 for s in none)
        full = apply_plan(triplets, AugmentPlan(negative_ratio=1.0), client)
        assert all(len(s.candidates) == 5 for s in full)

    def test_deterministic_under_seed(self):
        triplets = [_triplet(i) for i in range(20)]
        a = apply_plan(triplets, AugmentPlan(negative_ratio=0.4, seed=9), MockGenerationClient(9))
        b = apply_plan(triplets, AugmentPlan(negative_ratio=0.4, seed=9), MockGenerationClient(9))
        assert a == b

    def test_order_is_input_order(self):
        triplets = [_triplet(i) for i in range(7)]
        samples = apply_plan(triplets, AugmentPlan(negative_ratio=0.5), MockGenerationClient())
        assert [s.sample_id for s in samples] == [f"tr{i}" for i in range(7)]


class TestMixSources:
    def test_exact_window_counts(self):
        tagged = [[(src, i) for i in range(60)] for src in range(3)]
        out = list(itertools.islice(mix_sources(tagged, [3, 1, 1], seed=0), 50))
        # every full window of 5 holds exactly 3/1/1
        for w in range(10):
            window = out[w * 5 : (w + 1) * 5]
            tags = [t for t, _ in window]
            assert tags.count(0) == 3 and tags.count(1) == 1 and tags.count(2) == 1

    def test_deterministic(self):
        tagged = [[(src, i) for i in range(30)] for src in range(2)]
        a = list(itertools.islice(mix_sources(tagged, [2, 1], seed=5), 21))
        b = list(itertools.islice(mix_sources(tagged, [2, 1], seed=5), 21))
        assert a == b

    def test_rescale_on_exhaustion(self):
        short = [("a", i) for i in range(2)]
        long = [("b", i) for i in range(40)]
        out = list(mix_sources([short, long], [1, 1], seed=0))
        assert [x for x in out if x[0] == "a"] == short
        assert len(out) == 42  # nothing dropped

    def test_stop_on_exhaustion(self):
        short = [("a", i) for i in range(1)]
        long = [("b", i) for i in range(40)]
        with pytest.raises(SourceExhausted):
            list(mix_sources([short, long], [1, 1], seed=0, on_exhausted="stop"))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            list(mix_sources([], []))
        with pytest.raises(ValueError):
            list(mix_sources([[1]], [0]))
        with pytest.raises(ValueError):
            list(mix_sources([[1]], [1], on_exhausted="explode"))

    def test_prefix_share_bounded(self):
        tagged = [[(src, i) for i in range(200)] for src in range(3)]
        ratio = [3, 1, 1]
        out = list(itertools.islice(mix_sources(tagged, ratio, seed=2), 150))
        total = sum(ratio)
        for L in range(1, len(out) + 1):
            prefix = out[:L]
            for src in range(3):
                count = sum(1 for t, _ in prefix if t == src)
                assert abs(count - L * ratio[src] / total) < total


class TestInSampleNegatives:
    def test_excludes_positive(self):
        sample = plan_augmented_sample(_triplet(), AugmentPlan(), MockGenerationClient())
        ids = select_in_sample_negatives(sample, 3, seed=1)
        assert len(ids) == 3
        assert sample.positive_id() not in ids

    def test_insufficient_negatives(self):
        sample = plan_augmented_sample(
            _triplet(), AugmentPlan(identity_count=0, image_aug_count=0, pool_size=2),
            MockGenerationClient(),
        )
        with pytest.raises(InsufficientNegatives):
            select_in_sample_negatives(sample, 3)

    def test_deterministic(self):
        sample = make_sample(12)
        assert select_in_sample_negatives(sample, 2, seed=4) == select_in_sample_negatives(
            sample, 2, seed=4
        )


class TestMockClient:
    def test_deterministic_content(self):
        a, b = MockGenerationClient(3), MockGenerationClient(3)
        assert a.mutate_text("red car", 2) == b.mutate_text("red car", 2)
        assert a.generate_image("a dog") == b.generate_image("a dog")
        assert MockGenerationClient(4).generate_image("a dog") != a.generate_image("a dog")

    def test_triplet_validation(self):
        with pytest.raises(ValueError):
            SourceTriplet(
                query_image="", query_text="t", positive_image="p",
                source=TripletSource.EDITING_DRIVEN,
            )
