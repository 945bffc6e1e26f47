from __future__ import annotations

import json
import random
from collections import Counter

import pytest
import scipy.stats

from chapterbench.contamination import (
    build_trial_prompt,
    eligible,
    pick_mask,
    run_ts_guessing,
)
from chapterbench.gateway import ChatResponse, Gateway
from chapterbench.pipeline import candidate_to_task
from chapterbench.schema import OPTION_E_TEXT

from conftest import make_candidate


def task_with_options(taxonomy, options: dict[str, str], correct="B", number=1, question="Q?"):
    candidate = make_candidate(question=question, correct=correct, options=options)
    return candidate_to_task(candidate, taxonomy, number)


@pytest.fixture
def numeric_task(taxonomy):
    return task_with_options(
        taxonomy,
        {"A": "$48.67", "B": "$181.96", "C": "$284.13", "D": "$514.76", "E": OPTION_E_TEXT},
    )


class TestEligible:
    def test_dollar_amounts_eligible(self, numeric_task):
        assert eligible(numeric_task)

    def test_long_prose_ineligible(self, taxonomy):
        task = task_with_options(
            taxonomy,
            {
                "A": "a very long answer made of nine plain prose words",
                "B": "2",
                "C": "3",
                "D": "4",
                "E": OPTION_E_TEXT,
            },
        )
        assert not eligible(task)

    def test_five_word_option_is_short_enough(self, taxonomy):
        task = task_with_options(
            taxonomy,
            {"A": "the bias variance tradeoff matters", "B": "2", "C": "3", "D": "4", "E": OPTION_E_TEXT},
        )
        assert eligible(task)

    def test_latex_expression_eligible(self, taxonomy):
        expr = r"$\frac{-(e+2)}{\sqrt{3e^2+4e+2}}$"
        task = task_with_options(
            taxonomy,
            {"A": expr, "B": r"$\sqrt{2}/2$ if and only if the premise holds for every single case", "C": "3", "D": "4", "E": OPTION_E_TEXT},
        )
        # B is long prose-ish but contains TeX... verify the rule per option:
        assert not eligible(task)
        task.options["B"] = r"$\frac{-(\sqrt{e}+2)}{\sqrt{3e - 4\sqrt{e} + 4}}$"
        assert eligible(task)

    def test_option_e_exempt(self, taxonomy):
        # E's fixed text is 4 words anyway, but never checked.
        task = task_with_options(
            taxonomy, {"A": "1", "B": "2", "C": "3", "D": "4", "E": OPTION_E_TEXT}
        )
        assert eligible(task)


class TestPickMask:
    def test_never_correct_never_e(self, numeric_task):
        rng = random.Random(0)
        labels = {pick_mask(numeric_task, rng) for _ in range(200)}
        assert labels == {"A", "C", "D"}

    def test_correct_e_masks_all_four(self, taxonomy):
        task = task_with_options(
            taxonomy, {"A": "1", "B": "2", "C": "3", "D": "4", "E": OPTION_E_TEXT}, correct="E"
        )
        rng = random.Random(0)
        labels = {pick_mask(task, rng) for _ in range(400)}
        assert labels == {"A", "B", "C", "D"}

    def test_deterministic_for_fixed_seed(self, numeric_task):
        first = pick_mask(numeric_task, random.Random(7))
        second = pick_mask(numeric_task, random.Random(7))
        assert first == second

    def test_uniform_chi_square(self, numeric_task):
        rng = random.Random(123)
        counts = Counter(pick_mask(numeric_task, rng) for _ in range(10_000))
        observed = [counts[label] for label in ("A", "C", "D")]
        p_value = scipy.stats.chisquare(observed).pvalue
        assert p_value > 0.01


class TestTrialPrompt:
    def test_shows_only_preceding_options(self, numeric_task):
        prompt = build_trial_prompt(numeric_task, "C")
        assert "A. $48.67" in prompt
        assert "B. $181.96" in prompt
        assert "$284.13" not in prompt
        assert "$514.76" not in prompt
        assert "C. [MASKED]" in prompt


class MemorizingModel:
    """Returns the true masked option text (a fully contaminated model)."""

    def __init__(self, benchmark):
        self.name = "memorizer"
        self.model_id = "memorizer"
        self._tasks = list(benchmark)

    def chat_once(self, request, tag="default"):
        content = request.messages[-1]["content"]
        label = content.split("Reply with ONLY the exact text of option ")[1][0]
        for task in self._tasks:
            if task.question in content:
                return ChatResponse(text="  " + task.options[label].upper() + " \n", input_tokens=1, output_tokens=1)
        raise AssertionError("unknown task in prompt")


class NonsenseModel:
    def __init__(self):
        self.name = "nonsense"
        self.model_id = "nonsense"

    def chat_once(self, request, tag="default"):
        return ChatResponse(text="the moon is made of cheese", input_tokens=1, output_tokens=1)


def build_benchmark(taxonomy, n=12):
    tasks = []
    for i in range(n):
        correct = "ABCDE"[i % 5]
        options = {"A": f"{i}.1", "B": f"{i}.2", "C": f"{i}.3", "D": f"{i}.4", "E": OPTION_E_TEXT}
        tasks.append(task_with_options(taxonomy, options, correct=correct, number=i + 1, question=f"Value {i}?"))
    return tasks


class TestRunTsGuessing:
    def test_memorizing_mock_rate_one(self, taxonomy):
        benchmark = build_benchmark(taxonomy)
        gateway = Gateway(max_attempts=1)
        gateway.add_provider("subject", MemorizingModel(benchmark))
        result = run_ts_guessing(gateway, "subject", benchmark, rng_seed=5)
        assert result.eligible_count == len(benchmark)
        assert result.rate == 1.0

    def test_nonsense_mock_rate_zero(self, taxonomy):
        benchmark = build_benchmark(taxonomy)
        gateway = Gateway(max_attempts=1)
        gateway.add_provider("subject", NonsenseModel())
        result = run_ts_guessing(gateway, "subject", benchmark, rng_seed=5)
        assert result.rate == 0.0

    def test_trials_never_mask_correct_or_e(self, taxonomy):
        benchmark = build_benchmark(taxonomy, n=40)
        gateway = Gateway(max_attempts=1)
        gateway.add_provider("subject", NonsenseModel())
        result = run_ts_guessing(gateway, "subject", benchmark, rng_seed=11)
        by_id = {t.task_id: t for t in benchmark}
        for trial in result.trials:
            assert trial.masked_label != "E"
            assert trial.masked_label != by_id[trial.task_id].correct_answer
            shown_labels = [label for label, _ in trial.shown_options]
            assert shown_labels == [l for l in "ABCD" if l < trial.masked_label]

    def test_filtering_reports_eligible_subset_size(self, taxonomy):
        benchmark = build_benchmark(taxonomy, n=6)
        benchmark[0].options["A"] = "this distractor is definitely much too long to be eligible"
        gateway = Gateway(max_attempts=1)
        gateway.add_provider("subject", NonsenseModel())
        result = run_ts_guessing(gateway, "subject", benchmark, rng_seed=1)
        assert result.eligible_count == 5
        assert len(result.trials) == 5

    def test_bit_exact_reproducibility_and_outputs(self, taxonomy, tmp_path):
        benchmark = build_benchmark(taxonomy)
        outputs = []
        for _ in range(2):
            gateway = Gateway(max_attempts=1)
            gateway.add_provider("subject", MemorizingModel(benchmark))
            out_dir = tmp_path / "tsguess"
            result = run_ts_guessing(gateway, "subject", benchmark, rng_seed=3, out_dir=out_dir)
            outputs.append((result.rate, [t.to_dict() for t in result.trials]))
        assert outputs[0] == outputs[1]
        [summary] = json.loads((tmp_path / "tsguess" / "summary.json").read_text())
        assert summary["model_id"] == "memorizer"
        assert summary["eligible_count"] == len(benchmark)
        assert summary["rate"] == 1.0

    def test_match_is_trim_and_casefold_only(self, taxonomy):
        # MemorizingModel returns uppercased, padded text: still a match.
        benchmark = build_benchmark(taxonomy, n=4)
        gateway = Gateway(max_attempts=1)
        gateway.add_provider("subject", MemorizingModel(benchmark))
        result = run_ts_guessing(gateway, "subject", benchmark, rng_seed=2)
        assert result.rate == 1.0
