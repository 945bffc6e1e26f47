from __future__ import annotations

import json
from pathlib import Path

import pytest

from chapterbench.corpus import load_manifest, load_taxonomy
from chapterbench.gateway import Gateway, HashEmbeddingProvider, MockChatProvider
from chapterbench.schema import (
    BloomLevel,
    Difficulty,
    GraphEdge,
    GraphNode,
    McqCandidate,
    Provenance,
    SolutionGraph,
)

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def taxonomy():
    return load_taxonomy(DATA_DIR / "taxonomy.json")


@pytest.fixture
def ml_taxonomy():
    return load_taxonomy(DATA_DIR / "ml_taxonomy.json")


@pytest.fixture
def chapters(taxonomy):
    return load_manifest(DATA_DIR / "chapters" / "manifest.json", taxonomy)


def make_graph(n_nodes: int = 2) -> SolutionGraph:
    nodes = [GraphNode(id=f"V{i+1}", content=f"step {i+1}") for i in range(n_nodes)]
    edges = [GraphEdge(src=f"V{i+1}", dst=f"V{i+2}", operation="apply rule") for i in range(n_nodes - 1)]
    return SolutionGraph(nodes=nodes, edges=edges)


def make_candidate(
    question: str = "Which value follows from the rule?",
    correct: str = "B",
    bloom: BloomLevel = BloomLevel.Apply,
    difficulty: Difficulty = Difficulty.Hard,
    options: dict[str, str] | None = None,
) -> McqCandidate:
    if options is None:
        options = {"A": "1", "B": "2", "C": "3", "D": "4", "E": "None of the above"}
    return McqCandidate(
        question=question,
        options=options,
        correct_answer=correct,
        solution_graph=make_graph(),
        complete_solution="Apply the rule to get 2.",
        bloom=bloom,
        difficulty=difficulty,
        provenance=Provenance(book_id="book-a", chapter_id="ch01", competency_id="regression"),
    )


@pytest.fixture
def candidate() -> McqCandidate:
    return make_candidate()


def make_mock_gateway(script: dict | None = None, **providers) -> Gateway:
    """Gateway with designer/verifier mocks sharing one script plus a hash embedder."""
    gateway = Gateway(max_attempts=3, backoff_base=0.0)
    gateway.add_provider("designer", MockChatProvider(script, name="designer", model_id="mock-designer"))
    gateway.add_provider("verifier", MockChatProvider(script, name="verifier", model_id="mock-verifier"))
    gateway.add_provider("embedder", HashEmbeddingProvider())
    for name, provider in providers.items():
        gateway.add_provider(name, provider)
    return gateway


@pytest.fixture
def paper_tasks_path() -> Path:
    return DATA_DIR / "paper_tasks.jsonl"


@pytest.fixture
def paper_records(paper_tasks_path):
    with paper_tasks_path.open("r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]
