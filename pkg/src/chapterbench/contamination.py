"""Testset slot-guessing probe: mask an incorrect option and measure whether
a model reconstructs its exact text, which indicates memorization."""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import prompts
from .gateway import TAG_TSGUESS, ChatRequest, Gateway, GatewayError
from .schema import BenchmarkTask

MASKABLE_LABELS = ("A", "B", "C", "D")
MAX_SHORT_OPTION_WORDS = 5

# Purely numerical options: optional sign/currency, digit groups, optional
# decimals and percent/unit-free suffix.
_NUMERICAL_RE = re.compile(r"^[+-]?[$€£]?\s?\d[\d,]*(\.\d+)?%?$")

# For the math-expression check, TeX commands come out first, then only
# symbols/digits and single-letter variable tokens may remain.
_TEX_COMMAND_RE = re.compile(r"\\[a-zA-Z]+")
_MATH_SYMBOLS_RE = re.compile(r"[\d\s+\-*/^=<>≤≥().,%$!|:;_{}\[\]\\'\"~`∗·×÷√^°]+")


def _is_numerical(text: str) -> bool:
    return bool(_NUMERICAL_RE.match(text.strip()))


def _is_math_expression(text: str) -> bool:
    stripped = _TEX_COMMAND_RE.sub(" ", text.strip())
    stripped = _MATH_SYMBOLS_RE.sub(" ", stripped)
    leftover_words = stripped.split()
    return all(len(word) == 1 and word.isalpha() for word in leftover_words)


def _is_short(text: str) -> bool:
    return len(text.split()) <= MAX_SHORT_OPTION_WORDS


def eligible(task: BenchmarkTask) -> bool:
    """True iff every option A-D is short (<=5 words), purely numerical, or a
    mathematical expression. Option E is constant text and exempt."""
    for label in MASKABLE_LABELS:
        text = task.options.get(label, "")
        if not (_is_short(text) or _is_numerical(text) or _is_math_expression(text)):
            return False
    return True


def pick_mask(task: BenchmarkTask, rng: random.Random) -> str:
    """Uniformly select an incorrect option label among A-D (never E)."""
    incorrect = [label for label in MASKABLE_LABELS if label != task.correct_answer]
    if not incorrect:
        raise ValueError(f"task {task.task_id!r} has no incorrect option among A-D")
    return rng.choice(incorrect)


@dataclass
class TsGuessTrial:
    task_id: str
    masked_label: str
    shown_options: list[tuple[str, str]]
    model_guess: str
    matched: bool
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "masked_label": self.masked_label,
            "shown_options": [{"label": l, "text": t} for l, t in self.shown_options],
            "model_guess": self.model_guess,
            "matched": self.matched,
            "note": self.note,
        }


@dataclass
class TsGuessResult:
    model_id: str
    eligible_count: int
    matched_count: int
    trials: list[TsGuessTrial] = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.matched_count / self.eligible_count if self.eligible_count else 0.0

    def summary(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "eligible_count": self.eligible_count,
            "matched_count": self.matched_count,
            "rate": self.rate,
        }


def _normalize_guess(text: str) -> str:
    """Exact-match comparison modulo surrounding whitespace and case."""
    return text.strip().casefold()


def _task_rng(rng_seed: int, task_id: str) -> random.Random:
    digest = hashlib.sha256(f"{rng_seed}:{task_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def build_trial_prompt(task: BenchmarkTask, masked_label: str, template: str | None = None) -> str:
    shown = [(label, task.options[label]) for label in MASKABLE_LABELS if label < masked_label]
    text = template if template is not None else prompts.load_template("ts_guessing")
    return prompts.render(
        text,
        {
            "question": task.question,
            "shown_options": "\n".join(f"{label}. {option}" for label, option in shown),
            "masked_label": masked_label,
        },
        strict=False,
    )


def run_ts_guessing(
    gateway: Gateway,
    provider_name: str,
    benchmark: Sequence[BenchmarkTask],
    rng_seed: int = 0,
    template: str | None = None,
    out_dir: Path | None = None,
) -> TsGuessResult:
    """One masked-option trial per eligible task; returns the success rate.

    The mask draw is derived from (rng_seed, task_id), so rates are bit-exact
    reproducible for a fixed benchmark, seed, and scripted model. Transport
    failures count as unmatched trials with a note.
    """
    model_id = gateway.provider(provider_name).model_id
    result = TsGuessResult(model_id=model_id, eligible_count=0, matched_count=0)
    for task in benchmark:
        if not eligible(task):
            continue
        result.eligible_count += 1
        masked_label = pick_mask(task, _task_rng(rng_seed, task.task_id))
        shown = [(label, task.options[label]) for label in MASKABLE_LABELS if label < masked_label]
        prompt = build_trial_prompt(task, masked_label, template)
        request = ChatRequest(model_id=model_id, messages=[{"role": "user", "content": prompt}])
        note = ""
        try:
            guess = gateway.chat(provider_name, request, tag=TAG_TSGUESS).text
        except GatewayError as exc:
            guess = ""
            note = f"transport: {exc}"
        matched = bool(guess) and _normalize_guess(guess) == _normalize_guess(task.options[masked_label])
        result.matched_count += int(matched)
        result.trials.append(
            TsGuessTrial(
                task_id=task.task_id,
                masked_label=masked_label,
                shown_options=shown,
                model_guess=guess,
                matched=matched,
                note=note,
            )
        )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / f"{model_id}.jsonl").open("w", encoding="utf-8") as handle:
            for trial in result.trials:
                handle.write(json.dumps(trial.to_dict(), ensure_ascii=False) + "\n")
        _update_summary(out_dir / "summary.json", result.summary())
    return result


def _update_summary(path: Path, entry: dict[str, Any]) -> None:
    """summary.json holds one summary object per probed model."""
    entries: list[dict[str, Any]] = []
    if path.exists():
        entries = [e for e in json.loads(path.read_text(encoding="utf-8")) if e.get("model_id") != entry["model_id"]]
    entries.append(entry)
    entries.sort(key=lambda e: e["model_id"])
    path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
