"""Benchmark- and model-level metrics: coverage entropy, difficulty,
separability, rank-correlation profiling, external-problem classification,
and review-sample selection."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from . import prompts
from .corpus import Taxonomy
from .gateway import TAG_CLASSIFY, ChatRequest, Gateway


class MetricError(ValueError):
    """Metric preconditions violated (empty input, undefined value, ...)."""


class UndefinedCorrelationError(MetricError):
    """Spearman is undefined when either vector is constant."""


@dataclass(frozen=True)
class CompetencyDistribution:
    """Task counts per competency plus N, the taxonomy's competency count."""

    counts: Mapping[str, int]
    n_competencies: int

    def __post_init__(self) -> None:
        if self.n_competencies < 2:
            raise MetricError("normalization requires at least 2 competencies in the taxonomy")
        for competency, count in self.counts.items():
            if count < 0:
                raise MetricError(f"negative count for competency {competency!r}")

    @classmethod
    def from_taxonomy(cls, counts: Mapping[str, int], taxonomy: Taxonomy) -> "CompetencyDistribution":
        known = {c.competency_id for c in taxonomy.competencies}
        unknown = sorted(set(counts) - known)
        if unknown:
            raise MetricError(f"counts reference competencies outside the taxonomy: {unknown}")
        return cls(counts=dict(counts), n_competencies=taxonomy.competency_count)


def normalized_entropy(distribution: CompetencyDistribution) -> float:
    """Shannon entropy of the task distribution divided by log N, in [0, 1].

    Zero-count competencies contribute nothing to H but are counted in N.
    The logarithm base cancels in the ratio.
    """
    total = sum(distribution.counts.values())
    if total <= 0:
        raise MetricError("entropy is undefined for an empty distribution")
    entropy = 0.0
    for count in distribution.counts.values():
        if count > 0:
            p = count / total
            entropy -= p * math.log(p)
    return entropy / math.log(distribution.n_competencies)


def difficulty(accuracies: Mapping[str, float]) -> float:
    """Error rate of the best-performing model: 1 - max accuracy."""
    if not accuracies:
        raise MetricError("difficulty requires at least one model accuracy")
    return 1.0 - max(accuracies.values())


def separability(accuracies: Mapping[str, float]) -> float:
    """Mean absolute deviation of model accuracies."""
    if not accuracies:
        raise MetricError("separability requires at least one model accuracy")
    values = list(accuracies.values())
    mean = sum(values) / len(values)
    return sum(abs(v - mean) for v in values) / len(values)


def _average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks starting at 1; ties receive the mean of their rank positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(x: Mapping[str, float], y: Mapping[str, float]) -> float:
    """Spearman rank correlation over a shared model set (average-rank ties)."""
    if set(x) != set(y):
        raise MetricError("spearman requires the same model set in both vectors")
    if len(x) < 2:
        raise MetricError("spearman requires at least 2 models")
    models = sorted(x)
    xs = [x[m] for m in models]
    ys = [y[m] for m in models]
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise UndefinedCorrelationError("spearman is undefined for a constant vector")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    mean_rx = sum(rx) / len(rx)
    mean_ry = sum(ry) / len(ry)
    cov = sum((a - mean_rx) * (b - mean_ry) for a, b in zip(rx, ry))
    var_x = sum((a - mean_rx) ** 2 for a in rx)
    var_y = sum((b - mean_ry) ** 2 for b in ry)
    return cov / math.sqrt(var_x * var_y)


def correlation_profile(
    overall: Mapping[str, float],
    per_competency: Mapping[str, Mapping[str, float]],
) -> dict[str, float | None]:
    """Spearman of each competency's accuracy vector against the overall one.

    Undefined correlations (constant vectors) are flagged as ``None`` so the
    histogram export can exclude them.
    """
    profile: dict[str, float | None] = {}
    for competency, vector in per_competency.items():
        try:
            profile[competency] = spearman(overall, vector)
        except UndefinedCorrelationError:
            profile[competency] = None
    return profile


# ---------------------------------------------------------------------------
# External-benchmark classification


class ClassificationError(RuntimeError):
    """The classifier model failed to pick an offered identifier twice."""


def _format_area_list(taxonomy: Taxonomy) -> str:
    return "\n".join(f"{a.area_id} - {a.name}: {a.description}" for a in taxonomy.areas)


def _format_competency_list(taxonomy: Taxonomy, area_id: str) -> str:
    return "\n".join(
        f"{c.competency_id} - {c.name}: {c.description}" for c in taxonomy.competencies_of(area_id)
    )


def _ask_identifier(
    gateway: Gateway,
    provider_name: str,
    prompt: str,
    offered: list[str],
    model_id: str,
) -> str:
    """One classification stage: ask, retry once on an off-list answer."""
    for attempt in range(2):
        request = ChatRequest(model_id=model_id, messages=[{"role": "user", "content": prompt}])
        answer = gateway.chat(provider_name, request, tag=TAG_CLASSIFY).text.strip()
        if answer in offered:
            return answer
        prompt = (
            prompt
            + f"\n\nYour previous reply {answer!r} was not one of the offered identifiers. "
            + "Reply with exactly one identifier from the list."
        )
    raise ClassificationError(f"classifier returned an off-list identifier twice (last: {answer!r})")


def classify_external_problem(
    problem_text: str,
    taxonomy: Taxonomy,
    gateway: Gateway,
    provider_name: str,
) -> tuple[str, str]:
    """Two-stage classification: pick an area, then a competency within it."""
    model_id = gateway.provider(provider_name).model_id
    area_prompt = prompts.render_template(
        "classify_area",
        {
            "domain": taxonomy.domain_name,
            "area_list": _format_area_list(taxonomy),
            "problem_text": problem_text,
        },
    )
    area_id = _ask_identifier(gateway, provider_name, area_prompt, [a.area_id for a in taxonomy.areas], model_id)
    competency_prompt = prompts.render_template(
        "classify_competency",
        {
            "area_name": taxonomy.area(area_id).name,
            "competency_list": _format_competency_list(taxonomy, area_id),
            "problem_text": problem_text,
        },
    )
    offered = [c.competency_id for c in taxonomy.competencies_of(area_id)]
    competency_id = _ask_identifier(gateway, provider_name, competency_prompt, offered, model_id)
    return area_id, competency_id


# ---------------------------------------------------------------------------
# Expert-review sample selection


def select_review_samples(
    task_ids: Sequence[str],
    incorrect_by_task: Mapping[str, set[str]],
    frontier_models: set[str],
    fraction: float = 0.10,
    rng_seed: int = 0,
    incorrect_sample_size: int | None = None,
) -> dict[str, list[str]]:
    """Draw the uniform and incorrectly-solved review samples.

    ``incorrect_by_task`` maps task_id -> set of model_ids that answered it
    incorrectly. The uniform sample has ceil(fraction * size) ids without
    replacement; the incorrectly-solved sample is drawn from tasks missed by
    at least one frontier model (the whole pool unless a size is given).
    Both draws are deterministic for a given seed.
    """
    if not 0.0 < fraction <= 1.0:
        raise MetricError(f"fraction must lie in (0, 1], got {fraction}")
    ordered = sorted(task_ids)
    rng = random.Random(rng_seed)
    uniform_size = math.ceil(fraction * len(ordered))
    uniform_sample = rng.sample(ordered, uniform_size) if ordered else []
    pool = sorted(
        tid for tid in ordered if frontier_models & incorrect_by_task.get(tid, set())
    )
    if incorrect_sample_size is None or incorrect_sample_size >= len(pool):
        incorrect_sample = list(pool)
    else:
        incorrect_sample = rng.sample(pool, incorrect_sample_size)
    return {"uniform_sample": uniform_sample, "incorrectly_solved_sample": incorrect_sample}


def problem_hash(problem_text: str) -> str:
    """Stable key for the classification cache."""
    return hashlib.sha256(problem_text.encode("utf-8")).hexdigest()[:16]


def distribution_from_labels(labels: Sequence[str], taxonomy: Taxonomy) -> CompetencyDistribution:
    """Count tasks per competency id over the whole taxonomy (zeros included)."""
    counts = {c.competency_id: 0 for c in taxonomy.competencies}
    for label in labels:
        competency = taxonomy.resolve_competency(label)
        counts[competency.competency_id] += 1
    return CompetencyDistribution(counts=counts, n_competencies=taxonomy.competency_count)


def metric_row(name: str, accuracies: Mapping[str, float], entropy: float | None, size: int) -> dict[str, Any]:
    """One entropy.csv row: benchmark x {entropy, difficulty, separability, size}."""
    return {
        "benchmark": name,
        "normalized_entropy": entropy,
        "difficulty": difficulty(accuracies) if accuracies else None,
        "separability": separability(accuracies) if accuracies else None,
        "size": size,
    }
