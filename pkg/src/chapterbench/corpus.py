"""Competency taxonomy and pre-extracted chapter texts that ground generation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

IDENTIFIER_RE = re.compile(r"^[A-Za-z0-9_-]+$")


class CorpusError(ValueError):
    """Taxonomy or chapter input violates the corpus contract."""


def _check_identifier(value: str, what: str) -> str:
    if not value or not IDENTIFIER_RE.match(value):
        raise CorpusError(f"{what} {value!r} is not a valid identifier (letters, digits, underscore, hyphen)")
    return value


@dataclass(frozen=True)
class Area:
    area_id: str
    name: str
    description: str = ""


@dataclass(frozen=True)
class Competency:
    competency_id: str
    name: str
    area_id: str
    description: str = ""


@dataclass
class Taxonomy:
    """Two-level area -> competency structure every task is labeled with."""

    domain_name: str
    areas: list[Area]
    competencies: list[Competency]

    def __post_init__(self) -> None:
        area_ids = [a.area_id for a in self.areas]
        comp_ids = [c.competency_id for c in self.competencies]
        for dup in _duplicates(area_ids):
            raise CorpusError(f"duplicate area id {dup!r}")
        for dup in _duplicates(comp_ids):
            raise CorpusError(f"duplicate competency id {dup!r}")
        for dup in _duplicates(area_ids + comp_ids):
            raise CorpusError(f"identifier {dup!r} used as both area and competency")
        known_areas = set(area_ids)
        for comp in self.competencies:
            if comp.area_id not in known_areas:
                raise CorpusError(
                    f"competency {comp.competency_id!r} references unknown area {comp.area_id!r}"
                )
        owned = {c.area_id for c in self.competencies}
        for area in self.areas:
            if area.area_id not in owned:
                raise CorpusError(f"area {area.area_id!r} owns no competencies")

    @property
    def competency_count(self) -> int:
        """N, the entropy-normalization constant for this domain."""
        return len(self.competencies)

    def area(self, area_id: str) -> Area:
        for a in self.areas:
            if a.area_id == area_id:
                return a
        raise KeyError(area_id)

    def competency(self, competency_id: str) -> Competency:
        for c in self.competencies:
            if c.competency_id == competency_id:
                return c
        raise KeyError(competency_id)

    def resolve_competency(self, key: str) -> Competency:
        """Look a competency up by id, falling back to its display name."""
        for c in self.competencies:
            if c.competency_id == key:
                return c
        for c in self.competencies:
            if c.name == key:
                return c
        raise KeyError(key)

    def competencies_of(self, area_id: str) -> list[Competency]:
        return [c for c in self.competencies if c.area_id == area_id]

    @classmethod
    def from_dict(cls, doc: dict) -> "Taxonomy":
        try:
            areas = [
                Area(
                    area_id=_check_identifier(str(a["id"]), "area id"),
                    name=str(a.get("name", "")),
                    description=str(a.get("description", "")),
                )
                for a in doc["areas"]
            ]
            competencies = [
                Competency(
                    competency_id=_check_identifier(str(c["id"]), "competency id"),
                    name=str(c.get("name", "")),
                    area_id=str(c["area_id"]),
                    description=str(c.get("description", "")),
                )
                for c in doc["competencies"]
            ]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"malformed taxonomy document: {exc!r}") from exc
        return cls(domain_name=str(doc.get("domain", "")), areas=areas, competencies=competencies)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain_name,
            "areas": [{"id": a.area_id, "name": a.name, "description": a.description} for a in self.areas],
            "competencies": [
                {"id": c.competency_id, "name": c.name, "area_id": c.area_id, "description": c.description}
                for c in self.competencies
            ],
        }


def _duplicates(values: list[str]) -> list[str]:
    seen: set[str] = set()
    dups: list[str] = []
    for v in values:
        if v in seen and v not in dups:
            dups.append(v)
        seen.add(v)
    return dups


def load_taxonomy(path: Path | str) -> Taxonomy:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorpusError(f"taxonomy file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CorpusError(f"taxonomy file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorpusError(f"taxonomy file {path} must contain a JSON object")
    return Taxonomy.from_dict(doc)


@dataclass(frozen=True)
class ChapterDoc:
    """One chapter's plain text plus the metadata that grounds generation."""

    book_id: str
    chapter_id: str
    title: str
    competency_id: str
    body: str

    @property
    def key(self) -> str:
        return f"{self.book_id}__{self.chapter_id}"


def _chapter_from_entry(entry: dict, base_dir: Path, taxonomy: Taxonomy) -> ChapterDoc:
    for key in ("book_id", "chapter_id", "competency_id", "path"):
        if key not in entry:
            raise CorpusError(f"chapter metadata missing {key!r}: {entry!r}")
    book_id = _check_identifier(str(entry["book_id"]), "book id")
    chapter_id = _check_identifier(str(entry["chapter_id"]), "chapter id")
    competency_id = str(entry["competency_id"])
    try:
        taxonomy.competency(competency_id)
    except KeyError:
        raise CorpusError(
            f"chapter {book_id}/{chapter_id} labeled with unknown competency {competency_id!r}"
        )
    body_path = base_dir / str(entry["path"])
    try:
        body = body_path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CorpusError(f"chapter text file not found: {body_path}")
    if not body.strip():
        raise CorpusError(f"chapter {book_id}/{chapter_id} has an empty body ({body_path})")
    return ChapterDoc(
        book_id=book_id,
        chapter_id=chapter_id,
        title=str(entry.get("title", "")),
        competency_id=competency_id,
        body=body,
    )


def load_chapter(path: Path | str, taxonomy: Taxonomy) -> ChapterDoc:
    """Load one chapter from its metadata JSON (text path resolved relative to it)."""
    path = Path(path)
    try:
        entry = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorpusError(f"chapter metadata file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CorpusError(f"chapter metadata {path} is not valid JSON: {exc}") from exc
    if not isinstance(entry, dict):
        raise CorpusError(f"chapter metadata {path} must be a JSON object")
    return _chapter_from_entry(entry, path.parent, taxonomy)


def load_manifest(path: Path | str, taxonomy: Taxonomy) -> list[ChapterDoc]:
    """Load all chapters listed in a manifest (JSON array of metadata entries)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorpusError(f"chapter manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise CorpusError(f"chapter manifest {path} is not valid JSON: {exc}") from exc
    entries = doc.get("chapters") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise CorpusError(f"chapter manifest {path} must be a JSON array (or contain 'chapters')")
    return [_chapter_from_entry(e, path.parent, taxonomy) for e in entries]


@dataclass
class CoverageReport:
    """Report-only corpus health summary; never an error."""

    uncovered_competencies: list[str] = field(default_factory=list)
    chapters_per_area: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "uncovered_competencies": self.uncovered_competencies,
            "chapters_per_area": self.chapters_per_area,
            "warnings": self.warnings,
        }


def validate_corpus(taxonomy: Taxonomy, chapters: list[ChapterDoc]) -> CoverageReport:
    covered = {ch.competency_id for ch in chapters}
    uncovered = [c.competency_id for c in taxonomy.competencies if c.competency_id not in covered]
    per_area = {a.area_id: 0 for a in taxonomy.areas}
    for ch in chapters:
        area_id = taxonomy.competency(ch.competency_id).area_id
        per_area[area_id] += 1
    warnings = [f"competency {c!r} has no chapters" for c in uncovered]
    chapter_ids = [ch.chapter_id for ch in chapters]
    for dup in _duplicates(chapter_ids):
        warnings.append(f"duplicate chapter id {dup!r} across books")
    return CoverageReport(
        uncovered_competencies=uncovered,
        chapters_per_area=per_area,
        warnings=warnings,
    )
