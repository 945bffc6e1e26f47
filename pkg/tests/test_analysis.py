from __future__ import annotations

import math
import random

import numpy as np
import pytest
import scipy.stats

from chapterbench.analysis import (
    ClassificationError,
    CompetencyDistribution,
    MetricError,
    UndefinedCorrelationError,
    classify_external_problem,
    correlation_profile,
    difficulty,
    distribution_from_labels,
    normalized_entropy,
    select_review_samples,
    separability,
    spearman,
)
from chapterbench.gateway import MockChatProvider

from conftest import make_mock_gateway


def dist(counts: dict[str, int], n: int) -> CompetencyDistribution:
    return CompetencyDistribution(counts=counts, n_competencies=n)


class TestNormalizedEntropy:
    def test_uniform_is_one(self):
        d = dist({f"c{i}": 5 for i in range(8)}, 8)
        assert normalized_entropy(d) == pytest.approx(1.0, abs=1e-12)

    def test_single_mass_is_zero(self):
        assert normalized_entropy(dist({"a": 10, "b": 0}, 2)) == pytest.approx(0.0, abs=1e-12)

    def test_known_value(self):
        # counts [2,1,1], N=3: direct high-precision evaluation gives 0.946395.
        value = normalized_entropy(dist({"a": 2, "b": 1, "c": 1}, 3))
        expected = -(0.5 * math.log(0.5) + 0.25 * math.log(0.25) * 2) / math.log(3)
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.9464, abs=1e-4)

    def test_empty_distribution_rejected(self):
        with pytest.raises(MetricError):
            normalized_entropy(dist({"a": 0}, 2))

    def test_n_below_two_rejected(self):
        with pytest.raises(MetricError):
            dist({"a": 1}, 1)

    def test_permutation_and_scale_invariance(self):
        rng = random.Random(7)
        for _ in range(50):
            counts = {f"c{i}": rng.randint(0, 20) for i in range(6)}
            if sum(counts.values()) == 0:
                counts["c0"] = 1
            base = normalized_entropy(dist(counts, 9))
            shuffled_names = list(counts)
            rng.shuffle(shuffled_names)
            permuted = {f"c{i}": counts[name] for i, name in enumerate(shuffled_names)}
            assert normalized_entropy(dist(permuted, 9)) == pytest.approx(base, abs=1e-12)
            scaled = {k: v * 3 for k, v in counts.items()}
            assert normalized_entropy(dist(scaled, 9)) == pytest.approx(base, abs=1e-12)

    def test_oracle_equivalence_1000(self):
        rng = random.Random(42)
        for _ in range(1000):
            n = rng.randint(2, 40)
            counts = {f"c{i}": rng.randint(0, 30) for i in range(rng.randint(1, n))}
            if sum(counts.values()) == 0:
                counts["c0"] = 1
            values = np.array([v for v in counts.values() if v > 0], dtype=float)
            expected = float(scipy.stats.entropy(values) / math.log(n))
            got = normalized_entropy(dist(counts, n))
            assert abs(got - expected) <= 1e-9


class TestDifficulty:
    def test_paper_value_ml_ours(self):
        # Best model accuracy 0.717 -> difficulty 0.283 (Table of benchmark metrics).
        acc = {"best": 0.717, "mid": 0.5, "weak": 0.31}
        assert difficulty(acc) == pytest.approx(0.283, abs=1e-12)

    def test_all_perfect(self):
        assert difficulty({"a": 1.0, "b": 1.0}) == pytest.approx(0.0)

    def test_single_model(self):
        assert difficulty({"only": 0.4}) == pytest.approx(0.6)

    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            difficulty({})

    def test_oracle_equivalence_1000(self):
        rng = random.Random(1)
        for _ in range(1000):
            acc = {f"m{i}": rng.random() for i in range(rng.randint(1, 12))}
            assert abs(difficulty(acc) - (1.0 - max(acc.values()))) <= 1e-9


class TestSeparability:
    def test_constant_vector_zero(self):
        assert separability({"a": 0.5, "b": 0.5, "c": 0.5}) == pytest.approx(0.0)

    def test_symmetric_two_point(self):
        assert separability({"a": 0.2, "b": 0.8}) == pytest.approx(0.3, abs=1e-12)

    def test_translation_invariance_and_nonnegativity(self):
        rng = random.Random(3)
        for _ in range(100):
            acc = {f"m{i}": rng.random() for i in range(rng.randint(1, 10))}
            base = separability(acc)
            assert base >= 0
            shifted = {k: v + 0.123 for k, v in acc.items()}
            assert separability(shifted) == pytest.approx(base, abs=1e-12)

    def test_oracle_equivalence_1000(self):
        rng = random.Random(2)
        for _ in range(1000):
            values = [rng.random() for _ in range(rng.randint(1, 12))]
            acc = {f"m{i}": v for i, v in enumerate(values)}
            arr = np.array(values)
            expected = float(np.abs(arr - arr.mean()).mean())
            assert abs(separability(acc) - expected) <= 1e-12


class TestSpearman:
    def test_identical_rankings_exactly_one(self):
        x = {"a": 0.1, "b": 0.5, "c": 0.9}
        assert spearman(x, dict(x)) == 1.0

    def test_reversed_rankings(self):
        x = {"a": 0.1, "b": 0.5, "c": 0.9}
        y = {"a": 0.9, "b": 0.5, "c": 0.1}
        assert spearman(x, y) == pytest.approx(-1.0)

    def test_tied_values_average_ranks(self):
        x = {"m1": 1.0, "m2": 2.0, "m3": 2.0, "m4": 4.0}
        y = {"m1": 1.0, "m2": 2.0, "m3": 3.0, "m4": 4.0}
        assert spearman(x, y) == pytest.approx(0.9487, abs=1e-4)
        expected = scipy.stats.spearmanr([1, 2, 2, 4], [1, 2, 3, 4]).statistic
        assert spearman(x, y) == pytest.approx(expected, abs=1e-12)

    def test_constant_vector_is_undefined(self):
        with pytest.raises(UndefinedCorrelationError):
            spearman({"a": 0.5, "b": 0.5}, {"a": 0.1, "b": 0.9})

    def test_mismatched_model_sets(self):
        with pytest.raises(MetricError):
            spearman({"a": 1.0, "b": 0.5}, {"a": 1.0, "c": 0.5})

    def test_rank_invariance_under_monotone_transform(self):
        rng = random.Random(5)
        for _ in range(100):
            n = rng.randint(2, 10)
            x = {f"m{i}": rng.random() for i in range(n)}
            y = {f"m{i}": rng.random() for i in range(n)}
            if len(set(x.values())) == 1 or len(set(y.values())) == 1:
                continue
            base = spearman(x, y)
            transformed = {k: math.exp(3 * v) + 1 for k, v in x.items()}  # strictly increasing
            assert spearman(transformed, y) == pytest.approx(base, abs=1e-12)

    def test_oracle_equivalence_1000(self):
        rng = random.Random(11)
        checked = 0
        while checked < 1000:
            n = rng.randint(2, 12)
            xs = [rng.choice([rng.random(), round(rng.random(), 1)]) for _ in range(n)]
            ys = [rng.choice([rng.random(), round(rng.random(), 1)]) for _ in range(n)]
            if len(set(xs)) == 1 or len(set(ys)) == 1:
                continue
            x = {f"m{i}": v for i, v in enumerate(xs)}
            y = {f"m{i}": v for i, v in enumerate(ys)}
            expected = float(scipy.stats.spearmanr(xs, ys).statistic)
            assert abs(spearman(x, y) - expected) <= 1e-9
            checked += 1


class TestCorrelationProfile:
    def test_all_equal_to_overall(self):
        overall = {"a": 0.2, "b": 0.5, "c": 0.8}
        profile = correlation_profile(overall, {"c1": dict(overall), "c2": dict(overall)})
        assert profile == {"c1": 1.0, "c2": 1.0}

    def test_inverted_entry(self):
        overall = {"a": 0.2, "b": 0.5, "c": 0.8}
        inverted = {"a": 0.8, "b": 0.5, "c": 0.2}
        profile = correlation_profile(overall, {"c1": inverted})
        assert profile["c1"] == pytest.approx(-1.0)

    def test_undefined_entries_flagged_none(self):
        overall = {"a": 0.2, "b": 0.5}
        profile = correlation_profile(overall, {"c1": {"a": 0.5, "b": 0.5}})
        assert profile["c1"] is None

    def test_matches_scipy_on_random_tables(self):
        rng = random.Random(13)
        models = [f"m{i}" for i in range(6)]
        overall = {m: rng.random() for m in models}
        per_comp = {f"c{j}": {m: rng.random() for m in models} for j in range(40)}
        profile = correlation_profile(overall, per_comp)
        order = sorted(models)
        for comp, vector in per_comp.items():
            expected = scipy.stats.spearmanr(
                [overall[m] for m in order], [vector[m] for m in order]
            ).statistic
            assert profile[comp] == pytest.approx(float(expected), abs=1e-9)


class TestClassifyExternal:
    def test_two_stage_scripted(self, taxonomy):
        script = {"stages": {"classify": [{"text": "architectures"}, {"text": "transformers"}]}}
        gateway = make_mock_gateway()
        gateway.add_provider("classifier", MockChatProvider(script, model_id="mock-classifier"))
        pair = classify_external_problem("What does multi-head attention do?", taxonomy, gateway, "classifier")
        assert pair == ("architectures", "transformers")

    def test_off_list_retried_once_then_ok(self, taxonomy):
        script = {"stages": {"classify": [{"text": "bogus"}, {"text": "foundations"}, {"text": "regression"}]}}
        gateway = make_mock_gateway()
        gateway.add_provider("classifier", MockChatProvider(script, model_id="mock-classifier"))
        pair = classify_external_problem("Least squares?", taxonomy, gateway, "classifier")
        assert pair == ("foundations", "regression")

    def test_competency_from_other_area_is_off_list(self, taxonomy):
        # Stage 2 returns a competency outside the chosen area, twice -> error.
        script = {
            "stages": {
                "classify": [
                    {"text": "foundations"},
                    {"text": "transformers"},
                    {"text": "transformers"},
                ]
            }
        }
        gateway = make_mock_gateway()
        gateway.add_provider("classifier", MockChatProvider(script, model_id="mock-classifier"))
        with pytest.raises(ClassificationError):
            classify_external_problem("Least squares?", taxonomy, gateway, "classifier")

    def test_single_area_single_competency_forced(self, tmp_path):
        import json

        from chapterbench.corpus import load_taxonomy

        doc = {
            "domain": "d",
            "areas": [{"id": "a", "name": "A", "description": ""}],
            "competencies": [{"id": "c", "name": "C", "area_id": "a", "description": ""}],
        }
        path = tmp_path / "t.json"
        path.write_text(json.dumps(doc))
        tiny = load_taxonomy(path)
        script = {"stages": {"classify": [{"text": "a"}, {"text": "c"}]}}
        gateway = make_mock_gateway()
        gateway.add_provider("classifier", MockChatProvider(script, model_id="mock-classifier"))
        assert classify_external_problem("anything", tiny, gateway, "classifier") == ("a", "c")


class TestSelectReviewSamples:
    def test_ten_percent_of_100(self):
        ids = [f"t{i:03d}" for i in range(100)]
        samples = select_review_samples(ids, {}, frontier_models={"m"}, fraction=0.10, rng_seed=1)
        assert len(samples["uniform_sample"]) == 10
        assert len(set(samples["uniform_sample"])) == 10

    def test_ceil_rounding(self):
        ids = [f"t{i}" for i in range(15)]
        samples = select_review_samples(ids, {}, frontier_models=set(), fraction=0.10, rng_seed=1)
        assert len(samples["uniform_sample"]) == 2  # ceil(1.5)

    def test_perfect_frontier_models_empty_pool(self):
        ids = ["a", "b", "c"]
        incorrect = {"a": {"weak-model"}}
        samples = select_review_samples(ids, incorrect, frontier_models={"frontier"}, rng_seed=3)
        assert samples["incorrectly_solved_sample"] == []

    def test_incorrect_pool_membership(self):
        ids = ["a", "b", "c", "d"]
        incorrect = {"a": {"frontier"}, "c": {"frontier", "weak"}, "d": {"weak"}}
        samples = select_review_samples(ids, incorrect, frontier_models={"frontier"}, rng_seed=3)
        assert samples["incorrectly_solved_sample"] == ["a", "c"]

    def test_same_seed_identical(self):
        ids = [f"t{i}" for i in range(50)]
        incorrect = {f"t{i}": {"f"} for i in range(0, 50, 3)}
        first = select_review_samples(ids, incorrect, frontier_models={"f"}, rng_seed=9)
        second = select_review_samples(ids, incorrect, frontier_models={"f"}, rng_seed=9)
        assert first == second

    def test_fraction_bounds(self):
        with pytest.raises(MetricError):
            select_review_samples(["a"], {}, frontier_models=set(), fraction=0.0)
        with pytest.raises(MetricError):
            select_review_samples(["a"], {}, frontier_models=set(), fraction=1.5)


class TestDistributionFromLabels:
    def test_zero_count_competencies_counted_in_n(self, taxonomy):
        d = distribution_from_labels(["regression", "regression"], taxonomy)
        assert d.counts["transformers"] == 0
        assert d.n_competencies == 3

    def test_resolves_names(self, taxonomy):
        d = distribution_from_labels(["Transformers & Attention Mechanisms"], taxonomy)
        assert d.counts["transformers"] == 1
