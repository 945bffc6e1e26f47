"""Zero-shot multiple-choice evaluation of subject models over a benchmark."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import prompts
from .corpus import Taxonomy
from .gateway import TAG_EVAL, ChatRequest, Gateway, GatewayError
from .schema import OPTION_LABELS, BenchmarkTask


class EvalError(ValueError):
    pass


@dataclass
class EvalRecord:
    """Outcome of one (model, task) query."""

    model_id: str
    task_id: str
    raw_output: str
    parsed_choice: str | None
    is_correct: bool
    invalid: bool
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "task_id": self.task_id,
            "raw_output": self.raw_output,
            "parsed_choice": self.parsed_choice,
            "is_correct": self.is_correct,
            "invalid": self.invalid,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "EvalRecord":
        return cls(
            model_id=str(doc["model_id"]),
            task_id=str(doc["task_id"]),
            raw_output=str(doc.get("raw_output", "")),
            parsed_choice=doc.get("parsed_choice"),
            is_correct=bool(doc.get("is_correct", False)),
            invalid=bool(doc.get("invalid", False)),
            note=str(doc.get("note", "")),
        )


def render_mcq_prompt(task: BenchmarkTask, template: str | None = None) -> str:
    """Render the zero-shot MCQ prompt: statement, five labeled options, and
    a single-letter answer instruction. The template is configurable."""
    text = template if template is not None else prompts.load_template("mcq_eval")
    values = {
        "question": task.question,
        "option_a": task.options.get("A", ""),
        "option_b": task.options.get("B", ""),
        "option_c": task.options.get("C", ""),
        "option_d": task.options.get("D", ""),
        "option_e": task.options.get("E", ""),
        "options_block": "\n".join(f"{label}. {task.options[label]}" for label in OPTION_LABELS if label in task.options),
    }
    return prompts.render(text, values, strict=False)


_CUE_RE = re.compile(
    r"(?:answer\s+is|answer\s*:)\s*(?:option\s+)?[\*\"'\(\[]*([A-Ea-e])\b",
    re.IGNORECASE,
)
_FINAL_LINE_RE = re.compile(r"^[\*\(\[\s]*([A-Ea-e])[\*\)\]\.\s]*$")
_STANDALONE_RE = re.compile(r"\b([A-E])\b")


def parse_choice(raw: str) -> str | None:
    """Extract the chosen letter, or None when no unambiguous choice exists.

    Rule order: (1) the last letter preceded by an answer cue ("answer is",
    "Answer:", or a final line that is just a letter); (2) failing that, a
    letter that is the only standalone A-E in the text; (3) otherwise invalid.
    """
    cued: list[tuple[int, str]] = [(m.start(1), m.group(1).upper()) for m in _CUE_RE.finditer(raw)]
    lines = [line.strip() for line in raw.strip().splitlines() if line.strip()]
    if lines:
        final = _FINAL_LINE_RE.match(lines[-1])
        if final:
            cued.append((len(raw), final.group(1).upper()))
    if cued:
        return max(cued)[1]
    standalone = {m.group(1) for m in _STANDALONE_RE.finditer(raw)}
    if len(standalone) == 1:
        return next(iter(standalone))
    return None


def _load_existing(records_path: Path | None, model_id: str) -> dict[str, EvalRecord]:
    if records_path is None or not records_path.exists():
        return {}
    existing: dict[str, EvalRecord] = {}
    with records_path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = EvalRecord.from_dict(json.loads(line))
            if record.model_id == model_id:
                existing[record.task_id] = record
    return existing


def evaluate_model(
    gateway: Gateway,
    provider_name: str,
    benchmark: Sequence[BenchmarkTask],
    temperature: float = 0.0,
    template: str | None = None,
    records_path: Path | None = None,
) -> list[EvalRecord]:
    """Query one subject model on every task, resuming from persisted records.

    Records are appended to ``records_path`` as they complete, keyed by
    task_id; tasks already on disk are not re-queried. Invalid or
    transport-failed answers score as incorrect but stay in the totals.
    """
    model_id = gateway.provider(provider_name).model_id
    existing = _load_existing(records_path, model_id)
    handle = None
    if records_path is not None:
        records_path.parent.mkdir(parents=True, exist_ok=True)
        handle = records_path.open("a", encoding="utf-8")
    records: list[EvalRecord] = []
    try:
        for task in benchmark:
            if task.task_id in existing:
                records.append(existing[task.task_id])
                continue
            prompt = render_mcq_prompt(task, template)
            request = ChatRequest(
                model_id=model_id,
                messages=[{"role": "user", "content": prompt}],
                temperature=temperature,
            )
            try:
                response = gateway.chat(provider_name, request, tag=TAG_EVAL)
                choice = parse_choice(response.text)
                record = EvalRecord(
                    model_id=model_id,
                    task_id=task.task_id,
                    raw_output=response.text,
                    parsed_choice=choice,
                    is_correct=choice == task.correct_answer,
                    invalid=choice is None,
                )
            except GatewayError as exc:
                record = EvalRecord(
                    model_id=model_id,
                    task_id=task.task_id,
                    raw_output="",
                    parsed_choice=None,
                    is_correct=False,
                    invalid=True,
                    note=f"transport: {exc}",
                )
            records.append(record)
            if handle is not None:
                handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                handle.flush()
    finally:
        if handle is not None:
            handle.close()
    return records


# ---------------------------------------------------------------------------
# Aggregation


@dataclass
class SliceStat:
    correct: int = 0
    total: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


class AccuracyTable:
    """(model_id, slice) -> counts; slices: overall, area:, competency:, bloom:."""

    def __init__(self) -> None:
        self._stats: dict[tuple[str, str], SliceStat] = {}

    def add(self, model_id: str, slice_name: str, is_correct: bool) -> None:
        stat = self._stats.setdefault((model_id, slice_name), SliceStat())
        stat.total += 1
        stat.correct += int(is_correct)

    def stat(self, model_id: str, slice_name: str) -> SliceStat:
        return self._stats.get((model_id, slice_name), SliceStat())

    def accuracy(self, model_id: str, slice_name: str = "overall") -> float:
        return self.stat(model_id, slice_name).accuracy

    def models(self) -> list[str]:
        return sorted({model for model, _ in self._stats})

    def slices(self) -> list[str]:
        return sorted({s for _, s in self._stats})

    def model_vector(self, slice_name: str = "overall") -> dict[str, float]:
        return {
            model: self.accuracy(model, slice_name)
            for model in self.models()
            if (model, slice_name) in self._stats
        }

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for (model, slice_name), stat in sorted(self._stats.items()):
            out.setdefault(model, {})[slice_name] = {
                "correct": stat.correct,
                "total": stat.total,
                "accuracy": stat.accuracy,
            }
        return out

    def to_csv_rows(self) -> list[list[str]]:
        """Rows = slices, columns = models (accuracy per cell)."""
        models = self.models()
        rows = [["slice"] + models]
        for slice_name in self.slices():
            row = [slice_name]
            for model in models:
                stat = self._stats.get((model, slice_name))
                row.append(f"{stat.accuracy:.6f}" if stat is not None else "")
            rows.append(row)
        return rows


def taxonomy_violations(task: BenchmarkTask, taxonomy: Taxonomy) -> list[str]:
    """Consistency of a task's labels against the taxonomy (empty = consistent)."""
    try:
        competency = taxonomy.resolve_competency(task.competency)
    except KeyError:
        return [f"task {task.task_id}: competency {task.competency!r} not in taxonomy"]
    area = taxonomy.area(competency.area_id)
    expected = area.name or area.area_id
    if task.area_name and task.area_name != expected:
        return [f"task {task.task_id}: area_name {task.area_name!r} inconsistent with taxonomy ({expected!r})"]
    return []


def aggregate(
    records: Iterable[EvalRecord],
    benchmark: Sequence[BenchmarkTask],
    taxonomy: Taxonomy,
) -> AccuracyTable:
    """Fold eval records into overall / area / competency / bloom slices."""
    by_id = {task.task_id: task for task in benchmark}
    table = AccuracyTable()
    for record in records:
        task = by_id.get(record.task_id)
        if task is None:
            raise EvalError(f"record references unknown task_id {record.task_id!r}")
        try:
            competency = taxonomy.resolve_competency(task.competency)
        except KeyError:
            raise EvalError(
                f"task {task.task_id!r} labeled with competency {task.competency!r} not in taxonomy"
            )
        for slice_name in (
            "overall",
            f"area:{competency.area_id}",
            f"competency:{competency.competency_id}",
            f"bloom:{task.bloom.name}",
        ):
            table.add(record.model_id, slice_name, record.is_correct)
    return table
