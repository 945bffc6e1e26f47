"""Core domain types: MCQ candidates, solution graphs, knowledge summaries,
verifier verdicts, and strict parsing of agent output into them."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

OPTION_LABELS = ("A", "B", "C", "D", "E")
OPTION_E_TEXT = "None of the above"


class SchemaError(ValueError):
    """Structured document does not match the expected schema."""


class JsonExtractionError(ValueError):
    """No parseable JSON object could be extracted from agent output."""


class BloomLevel(enum.Enum):
    """Cognitive-skill levels, ordered from lower to higher."""

    Remember = 1
    Understand = 2
    Apply = 3
    Analyze = 4
    Evaluate = 5
    Create = 6

    def __lt__(self, other: "BloomLevel") -> bool:
        return self.value < other.value


class Difficulty(enum.Enum):
    Easy = 1
    Medium = 2
    Hard = 3

    def __lt__(self, other: "Difficulty") -> bool:
        return self.value < other.value


# Cognitively coherent (bloom, difficulty) combinations. Lower levels pair
# only with easier settings; the benchmark default targets Hard x the four
# highest levels.
VALID_PAIRINGS: dict[BloomLevel, frozenset[Difficulty]] = {
    BloomLevel.Remember: frozenset({Difficulty.Easy}),
    BloomLevel.Understand: frozenset({Difficulty.Easy, Difficulty.Medium}),
    BloomLevel.Apply: frozenset({Difficulty.Easy, Difficulty.Medium, Difficulty.Hard}),
    BloomLevel.Analyze: frozenset({Difficulty.Medium, Difficulty.Hard}),
    BloomLevel.Evaluate: frozenset({Difficulty.Medium, Difficulty.Hard}),
    BloomLevel.Create: frozenset({Difficulty.Medium, Difficulty.Hard}),
}

HARD_TARGET_LEVELS = (BloomLevel.Apply, BloomLevel.Analyze, BloomLevel.Evaluate, BloomLevel.Create)

# Descriptive long forms used in exported task records. Only the levels that
# have a documented long form are listed; the rest export as the bare token.
BLOOM_EXPORT_TEXT: dict[BloomLevel, str] = {
    BloomLevel.Remember: "Remember - Recall facts, terms, and basic concepts",
    BloomLevel.Understand: "Understand - Explain ideas or concepts in own words",
    BloomLevel.Apply: (
        "Apply - Use knowledge or methods in new but familiar situations. "
        "Example verbs: calculate, demonstrate, use, implement."
    ),
    BloomLevel.Analyze: (
        "Analyze - Break information into parts and examine relationships or patterns. "
        "Example verbs: differentiate, compare, examine, infer."
    ),
    BloomLevel.Evaluate: (
        "Evaluate - Make judgments based on criteria and standards. "
        "Example verbs: justify, critique, assess, argue."
    ),
    BloomLevel.Create: (
        "Create - Combine elements to form a new pattern, structure, or product. "
        "Example verbs: design, compose, formulate, generate."
    ),
}

DIFFICULTY_EXPORT_TEXT: dict[Difficulty, str] = {
    Difficulty.Hard: (
        "Hard - Involves complex reasoning, integration of several sub-topics, or solving "
        "non-trivial problems that demand deeper conceptual understanding."
    ),
}


def is_valid_pairing(bloom: BloomLevel, difficulty: Difficulty) -> bool:
    """True iff the (bloom, difficulty) pair is in the pairing table."""
    return difficulty in VALID_PAIRINGS[bloom]


_BLOOM_PREFIX_RE = re.compile(r"^\s*(Remember|Understand|Apply|Analyze|Evaluate|Create)\b")
_DIFFICULTY_PREFIX_RE = re.compile(r"^\s*(Easy|Medium|Hard)\b")


def parse_bloom(text: str) -> BloomLevel:
    """Parse a bloom level from a bare token or a descriptive long form."""
    m = _BLOOM_PREFIX_RE.match(text)
    if not m:
        raise SchemaError(f"unrecognized bloom level: {text!r}")
    return BloomLevel[m.group(1)]


def parse_difficulty(text: str) -> Difficulty:
    m = _DIFFICULTY_PREFIX_RE.match(text)
    if not m:
        raise SchemaError(f"unrecognized difficulty: {text!r}")
    return Difficulty[m.group(1)]


def bloom_export_text(bloom: BloomLevel) -> str:
    return BLOOM_EXPORT_TEXT.get(bloom, bloom.name)


def difficulty_export_text(difficulty: Difficulty) -> str:
    return DIFFICULTY_EXPORT_TEXT.get(difficulty, difficulty.name)


# ---------------------------------------------------------------------------
# JSON extraction from agent output


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*$", re.MULTILINE)


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise JsonExtractionError(f"duplicate key in JSON object: {key!r}")
        out[key] = value
    return out


def _first_balanced_object(text: str) -> str:
    start = text.find("{")
    if start < 0:
        raise JsonExtractionError("no JSON object found in output")
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    raise JsonExtractionError("unbalanced JSON object in output")


def extract_json(raw: str) -> dict[str, Any]:
    """Extract and strictly parse the first balanced JSON object in ``raw``.

    Code fences are stripped first; anything around the object (prose,
    trailing commentary) is ignored. Duplicate keys are an error, as is a
    top-level value that is not an object.
    """
    cleaned = _FENCE_RE.sub("", raw)
    candidate = _first_balanced_object(cleaned)
    try:
        doc = json.loads(candidate, object_pairs_hook=_reject_duplicate_keys)
    except JsonExtractionError:
        raise
    except json.JSONDecodeError as exc:
        raise JsonExtractionError(f"extracted object is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise JsonExtractionError("top-level JSON value is not an object")
    return doc


# ---------------------------------------------------------------------------
# Solution graphs


@dataclass(frozen=True)
class GraphNode:
    id: str
    content: str


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    operation: str = ""


@dataclass
class SolutionGraph:
    """Reasoning trace: nodes are partial solutions, edges apply one concept."""

    nodes: list[GraphNode] = field(default_factory=list)
    edges: list[GraphEdge] = field(default_factory=list)

    @classmethod
    def from_dict(cls, doc: Any) -> "SolutionGraph":
        if not isinstance(doc, dict):
            raise SchemaError("solution_graph must be an object")
        nodes_raw = doc.get("nodes")
        edges_raw = doc.get("edges", [])
        if not isinstance(nodes_raw, list):
            raise SchemaError("solution_graph.nodes must be a list")
        if not isinstance(edges_raw, list):
            raise SchemaError("solution_graph.edges must be a list")
        nodes = []
        for n in nodes_raw:
            if not isinstance(n, dict) or "id" not in n:
                raise SchemaError(f"malformed graph node: {n!r}")
            nodes.append(GraphNode(id=str(n["id"]), content=str(n.get("content", ""))))
        edges = []
        for e in edges_raw:
            if not isinstance(e, dict) or "from" not in e or "to" not in e:
                raise SchemaError(f"malformed graph edge: {e!r}")
            edges.append(GraphEdge(src=str(e["from"]), dst=str(e["to"]), operation=str(e.get("operation", ""))))
        return cls(nodes=nodes, edges=edges)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [{"id": n.id, "content": n.content} for n in self.nodes],
            "edges": [{"from": e.src, "to": e.dst, "operation": e.operation} for e in self.edges],
        }

    def find_cycle(self) -> list[str]:
        """Return node ids on some cycle, or [] if the graph is acyclic."""
        ids = {n.id for n in self.nodes}
        adjacency: dict[str, list[str]] = {i: [] for i in ids}
        indegree = {i: 0 for i in ids}
        for e in self.edges:
            if e.src in ids and e.dst in ids:
                adjacency[e.src].append(e.dst)
                indegree[e.dst] += 1
        queue = [i for i in ids if indegree[i] == 0]
        seen = 0
        while queue:
            node = queue.pop()
            seen += 1
            for nxt in adjacency[node]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    queue.append(nxt)
        return sorted(i for i in ids if indegree[i] > 0) if seen != len(ids) else []


def validate_solution_graph(graph: SolutionGraph) -> list[str]:
    """Return a list of invariant violations (empty means valid)."""
    violations = []
    if not graph.nodes:
        violations.append("graph: must contain at least one node")
    seen: set[str] = set()
    for n in graph.nodes:
        if n.id in seen:
            violations.append(f"graph: duplicate node id {n.id!r}")
        seen.add(n.id)
    for e in graph.edges:
        for endpoint in (e.src, e.dst):
            if endpoint not in seen:
                violations.append(f"graph: edge endpoint {endpoint!r} is not a node")
    cycle = graph.find_cycle()
    if cycle:
        violations.append("graph: cycle detected involving nodes " + ", ".join(cycle))
    return violations


# ---------------------------------------------------------------------------
# MCQ candidates


@dataclass(frozen=True)
class Provenance:
    book_id: str
    chapter_id: str
    competency_id: str

    def to_dict(self) -> dict[str, str]:
        return {"book_id": self.book_id, "chapter_id": self.chapter_id, "competency_id": self.competency_id}


@dataclass
class McqCandidate:
    """A five-option question plus the reasoning trace it was built from."""

    question: str
    options: dict[str, str]
    correct_answer: str
    solution_graph: SolutionGraph
    complete_solution: str
    bloom: BloomLevel
    difficulty: Difficulty
    provenance: Provenance
    extras: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_agent_json(
        cls,
        doc: dict[str, Any],
        bloom: BloomLevel,
        difficulty: Difficulty,
        provenance: Provenance,
        fallback_graph: SolutionGraph | None = None,
        fallback_solution: str = "",
    ) -> "McqCandidate":
        """Build a candidate from designer/verifier output.

        The target pairing and provenance are pipeline-owned and never taken
        from the agent. ``fallback_graph``/``fallback_solution`` cover repair
        outputs that legitimately omit those fields (the repair prompts only
        require question/options/correct_answer).
        """
        known = {"question", "options", "correct_answer", "solution_graph", "complete_solution"}
        for key in ("question", "options", "correct_answer"):
            if key not in doc:
                raise SchemaError(f"agent output missing {key!r}")
        options_raw = doc["options"]
        if not isinstance(options_raw, dict):
            raise SchemaError("options must be an object")
        options = {str(k): str(v) for k, v in options_raw.items()}
        if "solution_graph" in doc:
            graph = SolutionGraph.from_dict(doc["solution_graph"])
        elif fallback_graph is not None:
            graph = fallback_graph
        else:
            raise SchemaError("agent output missing 'solution_graph'")
        solution = str(doc.get("complete_solution", fallback_solution))
        extras = {k: v for k, v in doc.items() if k not in known}
        return cls(
            question=str(doc["question"]),
            options=options,
            correct_answer=str(doc["correct_answer"]),
            solution_graph=graph,
            complete_solution=solution,
            bloom=bloom,
            difficulty=difficulty,
            provenance=provenance,
            extras=extras,
        )

    def to_agent_json(self) -> dict[str, Any]:
        """The canonical JSON structure exchanged with the agents."""
        doc: dict[str, Any] = {
            "solution_graph": self.solution_graph.to_dict(),
            "question": self.question,
            "options": dict(self.options),
            "correct_answer": self.correct_answer,
            "complete_solution": self.complete_solution,
        }
        doc.update(self.extras)
        return doc

    def correct_option_text(self) -> str:
        return self.options[self.correct_answer]


def validate_candidate(candidate: McqCandidate) -> list[str]:
    """Check all candidate invariants; returns violations (empty = valid)."""
    violations = []
    labels = tuple(candidate.options.keys())
    if sorted(labels) != list(OPTION_LABELS):
        violations.append(f"options: expected exactly the five labels A-E, got {sorted(labels)}")
    else:
        for label in OPTION_LABELS:
            if not candidate.options[label].strip():
                violations.append(f"options: option {label} is empty")
        # The E text is compared byte-exact; the prompt mandates exactness.
        if candidate.options["E"] != OPTION_E_TEXT:
            violations.append(f"options: option E must be exactly {OPTION_E_TEXT!r}, got {candidate.options['E']!r}")
    if candidate.correct_answer not in OPTION_LABELS:
        violations.append(f"correct_answer: {candidate.correct_answer!r} is not one of A-E")
    if not candidate.question.strip():
        violations.append("question: empty")
    if not is_valid_pairing(candidate.bloom, candidate.difficulty):
        violations.append(
            f"pairing: ({candidate.bloom.name}, {candidate.difficulty.name}) is not a valid bloom-difficulty pair"
        )
    violations.extend(validate_solution_graph(candidate.solution_graph))
    return violations


# ---------------------------------------------------------------------------
# Chapter knowledge summaries


KNOWLEDGE_LIST_FIELDS = (
    "core_concepts",
    "definitions",
    "theorems_or_rules",
    "procedures",
    "algorithms",
    "derived_relationships",
    "subtle_constraints_or_caveats",
)

KNOWLEDGE_RELATIONS = {"requires", "depends_on", "uses"}


@dataclass
class ChapterKnowledge:
    """Structured chapter summary: concepts, rules, and a dependency graph."""

    core_concepts: list[dict[str, Any]] = field(default_factory=list)
    definitions: list[dict[str, Any]] = field(default_factory=list)
    theorems_or_rules: list[dict[str, Any]] = field(default_factory=list)
    procedures: list[dict[str, Any]] = field(default_factory=list)
    algorithms: list[dict[str, Any]] = field(default_factory=list)
    derived_relationships: list[dict[str, Any]] = field(default_factory=list)
    subtle_constraints_or_caveats: list[str] = field(default_factory=list)
    dependency_graph: dict[str, Any] = field(default_factory=lambda: {"nodes": [], "edges": []})

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ChapterKnowledge":
        if not isinstance(doc, dict):
            raise SchemaError("knowledge summary must be an object")
        kwargs: dict[str, Any] = {}
        for name in KNOWLEDGE_LIST_FIELDS:
            value = doc.get(name, [])
            if not isinstance(value, list):
                raise SchemaError(f"knowledge field {name!r} must be a list")
            kwargs[name] = value
        graph = doc.get("dependency_graph", {"nodes": [], "edges": []})
        if not isinstance(graph, dict) or not isinstance(graph.get("nodes", []), list) or not isinstance(
            graph.get("edges", []), list
        ):
            raise SchemaError("dependency_graph must be an object with node and edge lists")
        kwargs["dependency_graph"] = {"nodes": graph.get("nodes", []), "edges": graph.get("edges", [])}
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        doc = {name: getattr(self, name) for name in KNOWLEDGE_LIST_FIELDS}
        doc["dependency_graph"] = self.dependency_graph
        return doc

    def as_text(self) -> str:
        """Compact rendering used inside generation prompts."""
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def validate_knowledge(knowledge: ChapterKnowledge) -> list[str]:
    """Reference-integrity warnings for the dependency graph.

    Unlike solution traces, a flawed dependency graph does not reject the
    summary; callers record the warnings and keep the value.
    """
    warnings = []
    nodes = knowledge.dependency_graph.get("nodes", [])
    edges = knowledge.dependency_graph.get("edges", [])
    ids = [str(n.get("id")) for n in nodes if isinstance(n, dict)]
    id_set = set(ids)
    if len(ids) != len(id_set):
        warnings.append("dependency_graph: duplicate node ids")
    graph = SolutionGraph(
        nodes=[GraphNode(id=i, content="") for i in id_set],
        edges=[],
    )
    for e in edges:
        if not isinstance(e, dict):
            warnings.append(f"dependency_graph: malformed edge {e!r}")
            continue
        src, dst = str(e.get("from")), str(e.get("to"))
        relation = e.get("relation")
        for endpoint in (src, dst):
            if endpoint not in id_set:
                warnings.append(f"dependency_graph: edge endpoint {endpoint!r} is not a node")
        if relation not in KNOWLEDGE_RELATIONS:
            warnings.append(f"dependency_graph: unknown relation {relation!r}")
        if src in id_set and dst in id_set:
            graph.edges.append(GraphEdge(src=src, dst=dst))
    cycle = graph.find_cycle()
    if cycle:
        warnings.append("dependency_graph: cycle involving " + ", ".join(cycle))
    return warnings


# ---------------------------------------------------------------------------
# Verifier reports


VERIFIER_DIMENSIONS = ("json_format_valid", "mcq_integrity", "blooms_alignment", "constraint_compliance")


def _parse_yes_no(value: Any, field_name: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in {"yes", "no"}:
        return value.strip().lower() == "yes"
    raise SchemaError(f"verifier field {field_name!r} must be Yes or No, got {value!r}")


@dataclass
class VerifierReport:
    """Four-dimension verdict from final verification."""

    json_format_valid: bool
    mcq_integrity: bool
    blooms_alignment: bool
    constraint_compliance: bool
    overall_verdict: str
    explanation: str = ""
    question_evaluation: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "VerifierReport":
        dims = {name: _parse_yes_no(doc.get(name), name) for name in VERIFIER_DIMENSIONS}
        verdict = doc.get("overall_verdict")
        if not isinstance(verdict, str) or verdict.strip().capitalize() not in {"Pass", "Fail"}:
            raise SchemaError(f"overall_verdict must be Pass or Fail, got {verdict!r}")
        evaluation = doc.get("question_evaluation", {})
        if not isinstance(evaluation, dict):
            evaluation = {}
        return cls(
            overall_verdict=verdict.strip().capitalize(),
            explanation=str(doc.get("explanation", "")),
            question_evaluation=evaluation,
            **dims,
        )

    def dimensions(self) -> dict[str, bool]:
        return {name: getattr(self, name) for name in VERIFIER_DIMENSIONS}

    def recomputed_verdict(self) -> str:
        """Local decision rule: Pass iff all four dimensions are Yes."""
        return "Pass" if all(self.dimensions().values()) else "Fail"

    def is_consistent(self) -> bool:
        return self.overall_verdict == self.recomputed_verdict()

    def failing_dimensions(self) -> list[str]:
        return [name for name, ok in self.dimensions().items() if not ok]

    def format_only_failure(self) -> bool:
        return self.failing_dimensions() == ["json_format_valid"]

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {name: ("Yes" if ok else "No") for name, ok in self.dimensions().items()}
        doc["overall_verdict"] = self.overall_verdict
        doc["explanation"] = self.explanation
        doc["question_evaluation"] = self.question_evaluation
        return doc


def passing_report(explanation: str = "") -> VerifierReport:
    return VerifierReport(True, True, True, True, "Pass", explanation)


def failing_report(failing: Iterable[str], explanation: str) -> VerifierReport:
    """Synthesize a failed report for locally detected problems."""
    dims = {name: name not in set(failing) for name in VERIFIER_DIMENSIONS}
    return VerifierReport(overall_verdict="Fail", explanation=explanation, **dims)


# ---------------------------------------------------------------------------
# Benchmark tasks and JSONL interchange


TASK_RECORD_FIELDS = (
    "task_id",
    "task_statement",
    "task_type",
    "difficulty",
    "bloom_level",
    "choices",
    "competency",
    "area_name",
    "domain",
    "book_name",
    "chapter_id",
    "correct_answer",
    "solution_graph",
    "complete_solution",
)


@dataclass
class BenchmarkTask:
    """One exported benchmark item, as stored in the JSONL interchange format."""

    task_id: str
    question: str
    options: dict[str, str]
    correct_answer: str
    solution_graph: SolutionGraph
    complete_solution: str
    bloom: BloomLevel
    difficulty: Difficulty
    competency: str
    area_name: str
    domain: str
    book_name: str
    chapter_id: str
    task_type: str = "multiple_choice"
    bloom_text: str | None = None
    difficulty_text: str | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "BenchmarkTask":
        for key in ("task_id", "task_statement", "choices", "correct_answer"):
            if key not in record:
                raise SchemaError(f"task record missing {key!r}")
        choices = record["choices"]
        if not isinstance(choices, list):
            raise SchemaError("choices must be a list")
        options: dict[str, str] = {}
        for choice in choices:
            if not isinstance(choice, dict) or "label" not in choice or "solution" not in choice:
                raise SchemaError(f"malformed choice entry: {choice!r}")
            label = str(choice["label"])
            if label in options:
                raise SchemaError(f"duplicate choice label {label!r}")
            options[label] = str(choice["solution"])
        bloom_text = str(record.get("bloom_level", ""))
        difficulty_text = str(record.get("difficulty", ""))
        graph_doc = record.get("solution_graph", {"nodes": [], "edges": []})
        extras = {k: v for k, v in record.items() if k not in TASK_RECORD_FIELDS}
        return cls(
            task_id=str(record["task_id"]),
            question=str(record["task_statement"]),
            options=options,
            correct_answer=str(record["correct_answer"]),
            solution_graph=SolutionGraph.from_dict(graph_doc),
            complete_solution=str(record.get("complete_solution", "")),
            bloom=parse_bloom(bloom_text),
            difficulty=parse_difficulty(difficulty_text),
            competency=str(record.get("competency", "")),
            area_name=str(record.get("area_name", "")),
            domain=str(record.get("domain", "")),
            book_name=str(record.get("book_name", "")),
            chapter_id=str(record.get("chapter_id", "")),
            task_type=str(record.get("task_type", "multiple_choice")),
            bloom_text=bloom_text,
            difficulty_text=difficulty_text,
            extras=extras,
        )

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "task_id": self.task_id,
            "task_statement": self.question,
            "task_type": self.task_type,
            "difficulty": self.difficulty_text or difficulty_export_text(self.difficulty),
            "bloom_level": self.bloom_text or bloom_export_text(self.bloom),
            "choices": [{"label": label, "solution": self.options[label]} for label in sorted(self.options)],
            "competency": self.competency,
            "area_name": self.area_name,
            "domain": self.domain,
            "book_name": self.book_name,
            "chapter_id": self.chapter_id,
            "correct_answer": self.correct_answer,
            "solution_graph": self.solution_graph.to_dict(),
            "complete_solution": self.complete_solution,
        }
        record.update(self.extras)
        return record

    def as_candidate(self, competency_id: str | None = None, book_id: str | None = None) -> McqCandidate:
        """View the task as a candidate so candidate validation applies."""
        return McqCandidate(
            question=self.question,
            options=dict(self.options),
            correct_answer=self.correct_answer,
            solution_graph=self.solution_graph,
            complete_solution=self.complete_solution,
            bloom=self.bloom,
            difficulty=self.difficulty,
            provenance=Provenance(
                book_id=book_id or self.book_name,
                chapter_id=self.chapter_id,
                competency_id=competency_id or self.competency,
            ),
        )


def validate_task(task: BenchmarkTask) -> list[str]:
    return validate_candidate(task.as_candidate())


def dump_task_line(task: BenchmarkTask) -> str:
    return json.dumps(task.to_record(), ensure_ascii=False)


def write_tasks_jsonl(tasks: Iterable[BenchmarkTask], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for task in tasks:
            handle.write(dump_task_line(task) + "\n")


def read_tasks_jsonl(path: Path) -> list[BenchmarkTask]:
    tasks = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line, object_pairs_hook=_reject_duplicate_keys)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            tasks.append(BenchmarkTask.from_record(record))
    task_ids = [t.task_id for t in tasks]
    duplicates = {tid for tid in task_ids if task_ids.count(tid) > 1}
    if duplicates:
        raise SchemaError(f"{path}: duplicate task_id values: {sorted(duplicates)}")
    return tasks


def iter_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    """Yield raw JSON objects from a JSONL file (skipping blank lines)."""
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)
