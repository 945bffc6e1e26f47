"""Generate-then-verify pipeline: knowledge structuring, solution-graph-first
seed generation, five refinement stages, final verification, and a bounded
verification-driven repair loop, with strict run accounting.

Stage order per candidate:

    SeedGeneration -> SelfContainment -> TraceIntegrity -> Conciseness
        -> SourceRefRemoval -> Soundness -> FinalVerification

A failed candidate re-enters at SelfContainment after each repair, up to the
repair budget (default 3). The designer agent handles generation, the four
editing stages, and repairs; the verifier agent handles the trace-integrity
check and final verification.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import gateway as gw
from . import prompts
from .corpus import ChapterDoc, Taxonomy
from .gateway import ChatRequest, Gateway, GatewayError
from .schema import (
    VERIFIER_DIMENSIONS,
    BenchmarkTask,
    BloomLevel,
    ChapterKnowledge,
    Difficulty,
    JsonExtractionError,
    McqCandidate,
    Provenance,
    SchemaError,
    VerifierReport,
    extract_json,
    failing_report,
    is_valid_pairing,
    validate_candidate,
    validate_knowledge,
)


class StageId(enum.Enum):
    KnowledgeStructuring = "knowledge_structuring"
    SeedGeneration = "seed_generation"
    SelfContainment = "self_containment"
    TraceIntegrity = "trace_integrity"
    Conciseness = "conciseness"
    SourceRefRemoval = "source_reference_removal"
    Soundness = "soundness"
    FinalVerification = "final_verification"
    Repair = "repair"


REFINEMENT_STAGES = (
    StageId.SelfContainment,
    StageId.TraceIntegrity,
    StageId.Conciseness,
    StageId.SourceRefRemoval,
    StageId.Soundness,
)

# The verifier model handles assessment stages; the designer everything else.
VERIFIER_STAGES = {StageId.TraceIntegrity, StageId.FinalVerification}

_STAGE_TEMPLATES = {
    StageId.SelfContainment: "self_containment",
    StageId.Conciseness: "conciseness",
    StageId.SourceRefRemoval: "source_reference_removal",
    StageId.Soundness: "soundness",
}

_STAGE_TAGS = {
    StageId.KnowledgeStructuring: gw.TAG_KNOWLEDGE,
    StageId.SeedGeneration: gw.TAG_SEED,
    StageId.SelfContainment: gw.TAG_SELF_CONTAINMENT,
    StageId.TraceIntegrity: gw.TAG_TRACE_INTEGRITY,
    StageId.Conciseness: gw.TAG_CONCISENESS,
    StageId.SourceRefRemoval: gw.TAG_SOURCE_REF,
    StageId.Soundness: gw.TAG_SOUNDNESS,
    StageId.FinalVerification: gw.TAG_FINAL_VERIFICATION,
}

DEFAULT_TARGET_LEVELS = (BloomLevel.Apply, BloomLevel.Analyze, BloomLevel.Evaluate, BloomLevel.Create)
DEFAULT_MAX_REPAIRS = 3


class PipelineError(RuntimeError):
    pass


class ChapterUnstructurable(PipelineError):
    """Knowledge structuring failed terminally; the chapter is skipped."""


class CandidateInvalid(Exception):
    """A candidate (or verifier report) failed parsing or validation.

    Carries everything the repair path needs: a verdict-style report with
    the failing dimensions, the raw agent output when it never parsed, and
    the last schema-valid candidate when one exists.
    """

    def __init__(
        self,
        report: VerifierReport,
        raw_output: str | None = None,
        candidate: McqCandidate | None = None,
        stage: StageId | None = None,
    ):
        super().__init__(report.explanation)
        self.report = report
        self.raw_output = raw_output
        self.candidate = candidate
        self.stage = stage


@dataclass
class GenerationJob:
    """One seed candidate's worth of work for a chapter and target category."""

    chapter: ChapterDoc
    knowledge: ChapterKnowledge
    bloom: BloomLevel
    difficulty: Difficulty = Difficulty.Hard
    exemplars: list[str] = field(default_factory=list)
    accepted_so_far: list[McqCandidate] = field(default_factory=list)
    retry_budget: int = DEFAULT_MAX_REPAIRS
    ordinal: int = 0
    run_seed: int = 0

    def __post_init__(self) -> None:
        if not is_valid_pairing(self.bloom, self.difficulty):
            raise ValueError(f"invalid target pairing ({self.bloom.name}, {self.difficulty.name})")
        if self.retry_budget < 0:
            raise ValueError("retry budget must be non-negative")

    @property
    def candidate_id(self) -> str:
        return f"{self.chapter.key}__{self.bloom.name}__{self.ordinal:03d}"

    @property
    def provenance(self) -> Provenance:
        return Provenance(
            book_id=self.chapter.book_id,
            chapter_id=self.chapter.chapter_id,
            competency_id=self.chapter.competency_id,
        )

    def rng(self) -> random.Random:
        """Per-candidate stream derived from (run seed, chapter, category, ordinal)."""
        key = f"{self.run_seed}:{self.chapter.key}:{self.bloom.name}:{self.ordinal}"
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class RunLedger:
    """Strict seed accounting. Two identities hold after every run:

    seed_count = pass_first + repaired + discarded_retry + discarded_transport
    final_count = pass_first + repaired - dedup_removed
    """

    seed_count: int = 0
    pass_first: int = 0
    repaired: int = 0
    discarded_retry: int = 0
    discarded_transport: int = 0
    dedup_removed: int = 0
    final_count: int = 0
    per_bloom_retries: dict[str, int] = field(default_factory=dict)

    def add_retries(self, bloom: BloomLevel, count: int) -> None:
        if count:
            self.per_bloom_retries[bloom.name] = self.per_bloom_retries.get(bloom.name, 0) + count

    def merge(self, other: "RunLedger") -> None:
        self.seed_count += other.seed_count
        self.pass_first += other.pass_first
        self.repaired += other.repaired
        self.discarded_retry += other.discarded_retry
        self.discarded_transport += other.discarded_transport
        self.dedup_removed += other.dedup_removed
        for bloom, count in other.per_bloom_retries.items():
            self.per_bloom_retries[bloom] = self.per_bloom_retries.get(bloom, 0) + count
        self.recompute_final()

    def recompute_final(self) -> None:
        self.final_count = self.pass_first + self.repaired - self.dedup_removed

    def violations(self) -> list[str]:
        problems = []
        if self.seed_count != self.pass_first + self.repaired + self.discarded_retry + self.discarded_transport:
            problems.append("seed_count != pass_first + repaired + discarded_retry + discarded_transport")
        if self.final_count != self.pass_first + self.repaired - self.dedup_removed:
            problems.append("final_count != pass_first + repaired - dedup_removed")
        return problems

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed_count": self.seed_count,
            "pass_first": self.pass_first,
            "repaired": self.repaired,
            "discarded_retry": self.discarded_retry,
            "discarded_transport": self.discarded_transport,
            "dedup_removed": self.dedup_removed,
            "final_count": self.final_count,
            "per_bloom_retries": dict(sorted(self.per_bloom_retries.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunLedger":
        ledger = cls(**{k: doc.get(k, 0) for k in (
            "seed_count", "pass_first", "repaired", "discarded_retry",
            "discarded_transport", "dedup_removed", "final_count",
        )})
        ledger.per_bloom_retries = dict(doc.get("per_bloom_retries", {}))
        return ledger


@dataclass
class CandidateResult:
    candidate_id: str
    bloom: BloomLevel
    accepted: McqCandidate | None
    repairs: int
    discard_reason: str = ""
    diagnostic: str = ""


@dataclass
class ChapterResult:
    chapter: ChapterDoc
    accepted: list[McqCandidate]
    ledger: RunLedger
    discards: list[CandidateResult]
    knowledge_warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Prompt assembly (pure functions, tested directly)


def build_guidance(bloom: BloomLevel, difficulty: Difficulty) -> str:
    return prompts.render_template(
        "bloom_guidance", {"difficulty": difficulty.name, "blooms_level": bloom.name}
    )


def build_knowledge_prompts(chapter: ChapterDoc) -> tuple[str, str]:
    system = prompts.load_template("knowledge_structuring_system")
    user = prompts.render_template("knowledge_structuring_user", {"chapter_excerpts": chapter.body})
    return system, user


def _numbered_questions(candidates: list[McqCandidate]) -> str:
    return "\n".join(f"{i}. {c.question}" for i, c in enumerate(candidates, 1))


def build_seed_prompts(job: GenerationJob) -> tuple[str, str]:
    exemplars = list(job.exemplars)
    if len(exemplars) > 3:
        exemplars = job.rng().sample(exemplars, 3)
    while len(exemplars) < 3:
        exemplars.append("(no exemplar provided)")
    system = prompts.render_template(
        "seed_generation_system",
        {"exemplar_1": exemplars[0], "exemplar_2": exemplars[1], "exemplar_3": exemplars[2]},
    )
    user = prompts.render_template(
        "seed_generation_user",
        {
            "difficulty_and_blooms_guidance": build_guidance(job.bloom, job.difficulty),
            "chapter_excerpts": job.chapter.body,
            "chapter_knowledge_text": job.knowledge.as_text(),
        },
    )
    if job.accepted_so_far:
        user = (
            user
            + "\n"
            + prompts.load_template("anti_duplication")
            + "\nPreviously generated questions:\n"
            + _numbered_questions(job.accepted_so_far)
            + "\n"
        )
    return system, user


def build_stage_prompt(stage: StageId, candidate: McqCandidate) -> str:
    template = _STAGE_TEMPLATES[stage]
    return prompts.render_template(
        template, {"candidate_question": json.dumps(candidate.to_agent_json(), ensure_ascii=False, indent=2)}
    )


def build_trace_integrity_prompts(candidate: McqCandidate, job: GenerationJob) -> tuple[str, str]:
    system = prompts.load_template("trace_integrity_system")
    user = prompts.render_template(
        "trace_integrity_user",
        {
            "candidate_question": json.dumps(candidate.to_agent_json(), ensure_ascii=False, indent=2),
            "solution_trace": json.dumps(candidate.solution_graph.to_dict(), ensure_ascii=False, indent=2),
            "solution_full": json.dumps({"complete_solution": candidate.complete_solution}, ensure_ascii=False),
            "blooms_level": job.bloom.name,
        },
    )
    return system, user


def build_final_verification_prompts(candidate: McqCandidate, job: GenerationJob) -> tuple[str, str]:
    system = prompts.load_template("final_verification_system")
    user = prompts.render_template(
        "final_verification_user",
        {
            "blooms_level": job.bloom.name,
            "candidate_output": json.dumps(candidate.to_agent_json(), ensure_ascii=False, indent=2),
        },
    )
    return system, user


def build_format_repair_prompts(previous_output: str, feedback: str) -> tuple[str, str]:
    system = prompts.load_template("format_repair_system")
    user = prompts.render_template(
        "format_repair_user",
        {"previous_candidate_output": previous_output, "verifier_llm_feedback": feedback},
    )
    return system, user


def build_content_repair_prompts(
    previous_output: str, feedback: str, job: GenerationJob, solution_trace: str
) -> tuple[str, str]:
    system = prompts.load_template("content_repair_system")
    user = prompts.render_template(
        "content_repair_user",
        {
            "previous_candidate_output": previous_output,
            "verifier_llm_feedback": feedback,
            "difficulty_and_blooms_guidance": build_guidance(job.bloom, job.difficulty),
            "previous_questions": _numbered_questions(job.accepted_so_far) or "(none yet)",
            "chapter_material": job.chapter.body,
            "chapter_knowledge_text": job.knowledge.as_text(),
            "solution_trace": solution_trace,
        },
    )
    return system, user


def _report_feedback(report: VerifierReport) -> str:
    parts = [report.explanation] if report.explanation else []
    issues = report.question_evaluation.get("main_issues") or []
    if issues:
        parts.append("Main issues: " + "; ".join(str(i) for i in issues))
    fix = report.question_evaluation.get("fix")
    if fix:
        parts.append(f"Suggested fix: {fix}")
    failing = report.failing_dimensions()
    if failing:
        parts.append("Failing dimensions: " + ", ".join(failing))
    return "\n".join(parts) or "Verification failed."


# ---------------------------------------------------------------------------
# Engine


_CONTENT_FIELDS = ("question", "options", "correct_answer", "complete_solution")


class PipelineEngine:
    """Runs the per-candidate lifecycle against a designer and a verifier."""

    def __init__(
        self,
        gateway: Gateway,
        designer: str,
        verifier: str,
        max_repairs: int = DEFAULT_MAX_REPAIRS,
        run_seed: int = 0,
        exemplars: list[str] | None = None,
        knowledge_dir: Path | None = None,
        audit_dir: Path | None = None,
    ):
        self.gateway = gateway
        self.designer = designer
        self.verifier = verifier
        self.max_repairs = max_repairs
        self.run_seed = run_seed
        self.exemplars = list(exemplars or [])
        self.knowledge_dir = knowledge_dir
        self.audit_dir = audit_dir
        # Repair-call log: (candidate_id, path) pairs, for tests and audits.
        self.repair_calls: list[tuple[str, str]] = []

    # -- plumbing ----------------------------------------------------------

    def _chat(self, role: str, stage_tag: str, system: str | None, user: str) -> str:
        provider = self.designer if role == "designer" else self.verifier
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        model_id = self.gateway.provider(provider).model_id
        request = ChatRequest(model_id=model_id, messages=messages)
        return self.gateway.chat(provider, request, tag=stage_tag).text

    def _audit(self, candidate_id: str, sequence: int, label: str, payload: dict[str, Any]) -> None:
        if self.audit_dir is None:
            return
        path = self.audit_dir / candidate_id / f"stage-{sequence:02d}-{label}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    # -- knowledge structuring ---------------------------------------------

    def structure_knowledge(self, chapter: ChapterDoc) -> tuple[ChapterKnowledge, list[str]]:
        """Call the designer once per chapter; persist and reuse the summary."""
        cache_path = None
        if self.knowledge_dir is not None:
            cache_path = self.knowledge_dir / f"{chapter.key}.json"
            if cache_path.exists():
                knowledge = ChapterKnowledge.from_dict(json.loads(cache_path.read_text(encoding="utf-8")))
                return knowledge, validate_knowledge(knowledge)
        system, user = build_knowledge_prompts(chapter)
        try:
            raw = self._chat("designer", gw.TAG_KNOWLEDGE, system, user)
            knowledge = ChapterKnowledge.from_dict(extract_json(raw))
        except (GatewayError, JsonExtractionError, SchemaError) as exc:
            raise ChapterUnstructurable(f"chapter {chapter.key}: knowledge structuring failed: {exc}") from exc
        warnings = validate_knowledge(knowledge)
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            cache_path.write_text(
                json.dumps(knowledge.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
            )
        return knowledge, warnings

    # -- seed generation ----------------------------------------------------

    def _parse_candidate(
        self,
        raw: str,
        job: GenerationJob,
        stage: StageId,
        previous: McqCandidate | None,
    ) -> McqCandidate:
        """Parse agent output into a validated candidate or raise CandidateInvalid."""
        try:
            doc = extract_json(raw)
        except JsonExtractionError as exc:
            raise CandidateInvalid(
                failing_report(["json_format_valid"], f"{stage.value}: output is not parseable JSON: {exc}"),
                raw_output=raw,
                candidate=previous,
                stage=stage,
            ) from exc
        try:
            candidate = McqCandidate.from_agent_json(
                doc,
                bloom=job.bloom,
                difficulty=job.difficulty,
                provenance=job.provenance,
                fallback_graph=previous.solution_graph if previous else None,
                fallback_solution=previous.complete_solution if previous else "",
            )
        except SchemaError as exc:
            raise CandidateInvalid(
                failing_report(["json_format_valid"], f"{stage.value}: output does not match the schema: {exc}"),
                raw_output=raw,
                candidate=previous,
                stage=stage,
            ) from exc
        violations = validate_candidate(candidate)
        if violations:
            raise CandidateInvalid(
                failing_report(
                    ["mcq_integrity"], f"{stage.value}: candidate violates invariants: " + "; ".join(violations)
                ),
                raw_output=raw,
                candidate=previous,
                stage=stage,
            )
        return candidate

    def generate_seed(self, job: GenerationJob) -> McqCandidate:
        system, user = build_seed_prompts(job)
        raw = self._chat("designer", gw.TAG_SEED, system, user)
        return self._parse_candidate(raw, job, StageId.SeedGeneration, previous=None)

    # -- refinement stages ---------------------------------------------------

    def run_refinement_stage(self, stage: StageId, candidate: McqCandidate, job: GenerationJob) -> McqCandidate:
        if stage is StageId.TraceIntegrity:
            system, user = build_trace_integrity_prompts(candidate, job)
            raw = self._chat("verifier", _STAGE_TAGS[stage], system, user)
        else:
            user = build_stage_prompt(stage, candidate)
            raw = self._chat("designer", _STAGE_TAGS[stage], None, user)
        return self._parse_candidate(raw, job, stage, previous=candidate)

    # -- final verification ---------------------------------------------------

    def final_verify(self, candidate: McqCandidate, job: GenerationJob) -> VerifierReport:
        """Run final verification; the verdict is recomputed locally.

        An unparseable report is a Fail with a format diagnostic; a verdict
        that contradicts the four dimensions is coerced to Fail with a
        consistency diagnostic.
        """
        system, user = build_final_verification_prompts(candidate, job)
        raw = self._chat("verifier", gw.TAG_FINAL_VERIFICATION, system, user)
        try:
            report = VerifierReport.from_dict(extract_json(raw))
        except (JsonExtractionError, SchemaError) as exc:
            # Marking every dimension keeps this failure off the format-only
            # repair path: the candidate itself may be fine.
            return failing_report(
                list(VERIFIER_DIMENSIONS),
                f"verifier report unparseable (format diagnostic): {exc}",
            )
        if not report.is_consistent():
            note = (
                f"verdict {report.overall_verdict!r} contradicts dimensions "
                f"(recomputed {report.recomputed_verdict()!r}); coerced to Fail."
            )
            report.overall_verdict = "Fail"
            report.explanation = (report.explanation + " " if report.explanation else "") + note
        return report

    # -- repair ----------------------------------------------------------------

    def repair(self, failure: CandidateInvalid, job: GenerationJob) -> McqCandidate:
        """Route the diagnostic back to the designer on the right repair path."""
        report = failure.report
        feedback = _report_feedback(report)
        if failure.raw_output is not None:
            previous_output = failure.raw_output
        elif failure.candidate is not None:
            previous_output = json.dumps(failure.candidate.to_agent_json(), ensure_ascii=False, indent=2)
        else:
            previous_output = "(no previous output)"
        format_only = report.format_only_failure()
        if format_only:
            system, user = build_format_repair_prompts(previous_output, feedback)
            tag = gw.TAG_REPAIR_FORMAT
        else:
            trace = (
                json.dumps(failure.candidate.solution_graph.to_dict(), ensure_ascii=False, indent=2)
                if failure.candidate is not None
                else "(no solution trace available)"
            )
            system, user = build_content_repair_prompts(previous_output, feedback, job, trace)
            tag = gw.TAG_REPAIR_CONTENT
        self.repair_calls.append((job.candidate_id, tag))
        raw = self._chat("designer", tag, system, user)
        repaired = self._parse_candidate(raw, job, StageId.Repair, previous=failure.candidate)
        if format_only and failure.candidate is not None:
            before = failure.candidate.to_agent_json()
            after = repaired.to_agent_json()
            changed = [name for name in _CONTENT_FIELDS if before.get(name) != after.get(name)]
            if changed:
                raise CandidateInvalid(
                    failing_report(
                        ["json_format_valid"],
                        "format-only repair altered content fields: " + ", ".join(changed),
                    ),
                    raw_output=raw,
                    candidate=failure.candidate,
                    stage=StageId.Repair,
                )
        return repaired

    # -- candidate lifecycle ------------------------------------------------------

    def run_candidate(self, job: GenerationJob) -> CandidateResult:
        """Full per-candidate lifecycle; each candidate ends in exactly one of
        pass_first, repaired, discarded_retry, or discarded_transport."""
        repairs = 0
        sequence = 0
        candidate: McqCandidate | None = None
        pending: CandidateInvalid | None = None

        def audit(label: str, payload: dict[str, Any]) -> None:
            nonlocal sequence
            self._audit(job.candidate_id, sequence, label, payload)
            sequence += 1

        try:
            candidate = self.generate_seed(job)
            audit("seed", candidate.to_agent_json())
        except CandidateInvalid as err:
            pending = err
            audit("seed-invalid", {"diagnostic": err.report.explanation})
        except GatewayError as exc:
            return CandidateResult(job.candidate_id, job.bloom, None, 0, "transport", str(exc))

        while True:
            if pending is None:
                assert candidate is not None
                try:
                    for stage in REFINEMENT_STAGES:
                        candidate = self.run_refinement_stage(stage, candidate, job)
                        audit(stage.value, candidate.to_agent_json())
                    report = self.final_verify(candidate, job)
                    audit("final-verification", report.to_dict())
                    if report.overall_verdict == "Pass":
                        return CandidateResult(job.candidate_id, job.bloom, candidate, repairs)
                    pending = CandidateInvalid(report, candidate=candidate, stage=StageId.FinalVerification)
                except CandidateInvalid as err:
                    pending = err
                    audit("stage-invalid", {"stage": err.stage.value if err.stage else "?", "diagnostic": err.report.explanation})
                except GatewayError as exc:
                    return CandidateResult(job.candidate_id, job.bloom, None, repairs, "transport", str(exc))

            if repairs >= self.max_repairs:
                return CandidateResult(
                    job.candidate_id, job.bloom, None, repairs, "retry", pending.report.explanation
                )
            repairs += 1
            try:
                candidate = self.repair(pending, job)
                audit("repair", candidate.to_agent_json())
                pending = None
            except CandidateInvalid as err:
                pending = err
                audit("repair-invalid", {"diagnostic": err.report.explanation})
            except GatewayError as exc:
                return CandidateResult(job.candidate_id, job.bloom, None, repairs, "transport", str(exc))

    # -- chapter loop -----------------------------------------------------------------

    def run_chapter(
        self,
        chapter: ChapterDoc,
        quota: int,
        categories: tuple[BloomLevel, ...] = DEFAULT_TARGET_LEVELS,
        difficulty: Difficulty = Difficulty.Hard,
    ) -> ChapterResult:
        """Generate ``quota`` seeds per target category, threading accepted
        questions into later prompts for anti-duplication."""
        if quota <= 0:
            raise ValueError("quota must be positive")
        knowledge, warnings = self.structure_knowledge(chapter)
        accepted: list[McqCandidate] = []
        discards: list[CandidateResult] = []
        ledger = RunLedger()
        for bloom in categories:
            for ordinal in range(quota):
                job = GenerationJob(
                    chapter=chapter,
                    knowledge=knowledge,
                    bloom=bloom,
                    difficulty=difficulty,
                    exemplars=self.exemplars,
                    accepted_so_far=list(accepted),
                    retry_budget=self.max_repairs,
                    ordinal=ordinal,
                    run_seed=self.run_seed,
                )
                result = self.run_candidate(job)
                ledger.seed_count += 1
                ledger.add_retries(bloom, result.repairs)
                if result.accepted is not None:
                    if result.repairs == 0:
                        ledger.pass_first += 1
                    else:
                        ledger.repaired += 1
                    accepted.append(result.accepted)
                elif result.discard_reason == "transport":
                    ledger.discarded_transport += 1
                    discards.append(result)
                else:
                    ledger.discarded_retry += 1
                    discards.append(result)
        ledger.recompute_final()
        return ChapterResult(
            chapter=chapter, accepted=accepted, ledger=ledger, discards=discards, knowledge_warnings=warnings
        )


# ---------------------------------------------------------------------------
# Export to benchmark tasks


def _slug(text: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")
    return slug or "benchmark"


def candidate_to_task(
    candidate: McqCandidate, taxonomy: Taxonomy, task_number: int, domain_slug: str | None = None
) -> BenchmarkTask:
    """Assign a task id and taxonomy metadata to an accepted candidate."""
    competency = taxonomy.competency(candidate.provenance.competency_id)
    area = taxonomy.area(competency.area_id)
    slug = domain_slug or _slug(taxonomy.domain_name)
    return BenchmarkTask(
        task_id=f"{slug}_task_{task_number:06d}",
        question=candidate.question,
        options=dict(candidate.options),
        correct_answer=candidate.correct_answer,
        solution_graph=candidate.solution_graph,
        complete_solution=candidate.complete_solution,
        bloom=candidate.bloom,
        difficulty=candidate.difficulty,
        competency=competency.name or competency.competency_id,
        area_name=area.name or area.area_id,
        domain=taxonomy.domain_name,
        book_name=candidate.provenance.book_id,
        chapter_id=candidate.provenance.chapter_id,
    )
