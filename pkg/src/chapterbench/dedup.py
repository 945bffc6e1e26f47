"""Embedding-based near-duplicate removal within a chapter.

A greedy sequential pass keeps the first occurrence of each question family:
every item is compared against all previously retained items and removed
when its maximum cosine similarity strictly exceeds the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TypeVar

from .schema import McqCandidate

T = TypeVar("T")


@dataclass(frozen=True)
class DedupConfig:
    threshold: float = 0.90

    def __post_init__(self) -> None:
        if not math.isfinite(self.threshold):
            raise ValueError("dedup threshold must be finite")
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError("dedup threshold must lie in [-1, 1]")


@dataclass(frozen=True)
class Removal:
    """One removed item: its index, the retained index it matched, similarity."""

    index: int
    matched_index: int
    similarity: float


def dedup_key(candidate: McqCandidate) -> str:
    """Question stem, one space, then the correct option's text."""
    return f"{candidate.question} {candidate.correct_option_text()}"


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise ValueError(f"dimension mismatch: {len(u)} vs {len(v)}")
    dot = norm_u = norm_v = 0.0
    for a, b in zip(u, v):
        dot += a * b
        norm_u += a * a
        norm_v += b * b
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("cosine is undefined for zero vectors")
    return dot / math.sqrt(norm_u * norm_v)


def greedy_filter(
    items: Sequence[T],
    embeddings: Sequence[Sequence[float]],
    config: DedupConfig = DedupConfig(),
) -> tuple[list[T], list[Removal]]:
    """Greedy sequential dedup over ``items`` aligned with ``embeddings``.

    The first item is always retained. Item *i* is removed iff its maximum
    cosine similarity against the retained-so-far set strictly exceeds the
    threshold ("exceeds" is a strict inequality: a pair at exactly the
    threshold keeps both). Retained order is input order.
    """
    if len(items) != len(embeddings):
        raise ValueError("items and embeddings must be aligned")
    retained: list[T] = []
    retained_indices: list[int] = []
    removed: list[Removal] = []
    for i, (item, vector) in enumerate(zip(items, embeddings)):
        best: Removal | None = None
        for kept_index in retained_indices:
            similarity = cosine(vector, embeddings[kept_index])
            if best is None or similarity > best.similarity:
                best = Removal(index=i, matched_index=kept_index, similarity=similarity)
        if best is not None and best.similarity > config.threshold:
            removed.append(best)
        else:
            retained.append(item)
            retained_indices.append(i)
    return retained, removed
