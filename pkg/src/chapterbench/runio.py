"""Run-directory layout, locking, and persistence helpers.

Every command writes only under ``runs/<run_id>/``; completed work is
persisted per chapter (generation) or per task (evaluation) so re-running a
command resumes instead of recomputing.
"""

from __future__ import annotations

import csv
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from .pipeline import CandidateResult, ChapterResult, RunLedger
from .schema import (
    BloomLevel,
    Difficulty,
    McqCandidate,
    Provenance,
    SolutionGraph,
)


class RunLockError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def lock(self) -> Path:
        return self.root / ".lock"

    @property
    def config_snapshot(self) -> Path:
        return self.root / "config.json"

    @property
    def knowledge_dir(self) -> Path:
        return self.root / "knowledge"

    @property
    def candidates_dir(self) -> Path:
        return self.root / "candidates"

    @property
    def chapters_dir(self) -> Path:
        return self.root / "chapters"

    @property
    def accepted(self) -> Path:
        return self.root / "accepted.jsonl"

    @property
    def discards(self) -> Path:
        return self.root / "discards.jsonl"

    @property
    def ledger(self) -> Path:
        return self.root / "ledger.json"

    @property
    def final(self) -> Path:
        return self.root / "final.jsonl"

    @property
    def dedup_report(self) -> Path:
        return self.root / "dedup_report.json"

    @property
    def eval_dir(self) -> Path:
        return self.root / "eval"

    @property
    def analysis_dir(self) -> Path:
        return self.root / "analysis"

    @property
    def tsguess_dir(self) -> Path:
        return self.root / "tsguess"

    @property
    def classify_dir(self) -> Path:
        return self.root / "classify"

    @property
    def embed_cache(self) -> Path:
        return self.root / "cache" / "embeddings.jsonl"

    @property
    def corpus_report(self) -> Path:
        return self.root / "corpus_report.json"

    def eval_records(self, model_id: str) -> Path:
        return self.eval_dir / f"{safe_filename(model_id)}.jsonl"


def safe_filename(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in name)


@contextmanager
def run_lock(paths: RunPaths) -> Iterator[None]:
    """One writer per run directory, enforced with an O_EXCL lock file."""
    paths.root.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(paths.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunLockError(
            f"run directory {paths.root} is locked by another process (remove {paths.lock} if stale)"
        )
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield
    finally:
        paths.lock.unlink(missing_ok=True)


def write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, rows: list[list[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        csv.writer(handle).writerows(rows)


# ---------------------------------------------------------------------------
# Chapter-state persistence (generation resume unit)


def _candidate_state(candidate: McqCandidate) -> dict[str, Any]:
    return {
        "candidate": candidate.to_agent_json(),
        "bloom": candidate.bloom.name,
        "difficulty": candidate.difficulty.name,
        "provenance": candidate.provenance.to_dict(),
    }


def _candidate_from_state(doc: dict[str, Any]) -> McqCandidate:
    body = doc["candidate"]
    prov = doc["provenance"]
    known = {"question", "options", "correct_answer", "solution_graph", "complete_solution"}
    return McqCandidate(
        question=body["question"],
        options=dict(body["options"]),
        correct_answer=body["correct_answer"],
        solution_graph=SolutionGraph.from_dict(body["solution_graph"]),
        complete_solution=body.get("complete_solution", ""),
        bloom=BloomLevel[doc["bloom"]],
        difficulty=Difficulty[doc["difficulty"]],
        provenance=Provenance(prov["book_id"], prov["chapter_id"], prov["competency_id"]),
        extras={k: v for k, v in body.items() if k not in known},
    )


def chapter_state_path(paths: RunPaths, chapter_key: str) -> Path:
    return paths.chapters_dir / f"{chapter_key}.json"


def save_chapter_result(paths: RunPaths, result: ChapterResult) -> None:
    doc = {
        "chapter_key": result.chapter.key,
        "accepted": [_candidate_state(c) for c in result.accepted],
        "ledger": result.ledger.to_dict(),
        "discards": [
            {
                "candidate_id": d.candidate_id,
                "bloom": d.bloom.name,
                "reason": d.discard_reason,
                "repairs": d.repairs,
                "diagnostic": d.diagnostic,
            }
            for d in result.discards
        ],
        "knowledge_warnings": result.knowledge_warnings,
    }
    write_json(chapter_state_path(paths, result.chapter.key), doc)


def load_chapter_result(paths: RunPaths, chapter_key: str) -> dict[str, Any] | None:
    path = chapter_state_path(paths, chapter_key)
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def loaded_candidates(state: dict[str, Any]) -> list[McqCandidate]:
    return [_candidate_from_state(entry) for entry in state["accepted"]]


def loaded_ledger(state: dict[str, Any]) -> RunLedger:
    return RunLedger.from_dict(state["ledger"])


def loaded_discards(state: dict[str, Any]) -> list[CandidateResult]:
    return [
        CandidateResult(
            candidate_id=d["candidate_id"],
            bloom=BloomLevel[d["bloom"]],
            accepted=None,
            repairs=int(d["repairs"]),
            discard_reason=d["reason"],
            diagnostic=d.get("diagnostic", ""),
        )
        for d in state["discards"]
    ]
