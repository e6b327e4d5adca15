"""Core domain types, validation, and JSONL persistence for annotated corpora.

A corpus file is JSONL with one document object per line and the exact field
layout::

    {"doc_id": ..., "domain": "Textbook"|"Scientific", "title": ...,
     "sentences": [...], "source_meta": {...},
     "questions": [{"qid", "raw_text", "completed_text", "position", "role",
                    "answer", "answer_keywords", "evidence_indices",
                    "confidence_answer", "confidence_role"}, ...]}

Sentence indices are 1-based throughout; a question position of 0 marks a
title question. All types are frozen and safe to share across threads.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

NO_ANSWER = "NO ANSWER"

DOMAINS = ("Textbook", "Scientific")


class CorpusFormatError(ValueError):
    """Raised when a corpus file or record cannot be parsed at all."""


class CorpusValidationError(ValueError):
    """Raised when a structurally parseable record violates an invariant."""

    def __init__(self, doc_id: str, violations: list[str]):
        self.doc_id = doc_id
        self.violations = violations
        super().__init__(f"document {doc_id!r}: " + "; ".join(violations))


class QuestionRole(enum.Enum):
    AROUSE_INTEREST = "ArouseInterest"
    FRAME_PURPOSE = "FramePurpose"
    ORGANIZE_DISCOURSE = "OrganizeDiscourse"
    ESTABLISH_CLAIM = "EstablishClaim"
    PROVOKE_THOUGHT = "ProvokeThought"

    @classmethod
    def parse(cls, name: str) -> "QuestionRole":
        """Accept both the stable serialized name and the spaced display form."""
        key = name.replace(" ", "").replace("_", "").lower()
        for role in cls:
            if role.value.lower() == key:
                return role
        raise ValueError(f"unknown question role: {name!r}")

    @property
    def display(self) -> str:
        # "ArouseInterest" -> "Arouse Interest"
        out = [self.value[0]]
        for ch in self.value[1:]:
            if ch.isupper():
                out.append(" ")
            out.append(ch)
        return "".join(out)


@dataclass(frozen=True)
class Document:
    """An article as an ordered, 1-indexed sentence list with metadata."""

    doc_id: str
    domain: str
    title: str
    sentences: tuple[str, ...]
    source_meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    @property
    def n(self) -> int:
        return len(self.sentences)

    def sentence(self, index: int) -> str:
        """Sentence at 1-based index."""
        if not 1 <= index <= self.n:
            raise IndexError(f"sentence index {index} out of range 1..{self.n}")
        return self.sentences[index - 1]

    def text(self) -> str:
        return " ".join(self.sentences)


@dataclass(frozen=True)
class GuidingQuestion:
    """One in-text question; position is its own sentence index (0 = title)."""

    qid: str
    raw_text: str
    completed_text: str
    position: int
    role: QuestionRole
    answer: str
    answer_keywords: tuple[str, ...] = ()
    evidence_indices: tuple[int, ...] = ()
    confidence_answer: int = 1
    confidence_role: int = 1

    def __post_init__(self):
        object.__setattr__(self, "answer_keywords", tuple(self.answer_keywords))
        object.__setattr__(self, "evidence_indices", tuple(self.evidence_indices))

    @property
    def has_answer(self) -> bool:
        return self.answer != NO_ANSWER


@dataclass(frozen=True)
class AnnotatedDocument:
    document: Document
    questions: tuple[GuidingQuestion, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "questions", tuple(self.questions))

    @property
    def doc_id(self) -> str:
        return self.document.doc_id


@dataclass(frozen=True)
class CorpusStats:
    """Per-domain corpus statistics."""

    domain: str
    n_documents: int
    avg_words_per_doc: float
    n_questions: int
    avg_words_per_question: float
    avg_questions_per_doc: float


def validate_record(doc: AnnotatedDocument) -> list[str]:
    """Return all invariant violations for one record; empty list means valid.

    Pure and total: never raises on a structurally well-formed record.
    """
    v: list[str] = []
    d = doc.document
    if d.domain not in DOMAINS:
        v.append(f"domain: {d.domain!r} is not one of {DOMAINS}")
    if d.n < 1:
        v.append("sentences: document must contain at least one sentence")
    for i, s in enumerate(d.sentences, start=1):
        if not s.strip():
            v.append(f"sentences[{i}]: empty after trimming")
    n = d.n

    prev_pos = -1
    seen_qids = set()
    for q in doc.questions:
        tag = f"question {q.qid!r}"
        if q.qid in seen_qids:
            v.append(f"{tag}: duplicate qid within document")
        seen_qids.add(q.qid)
        if not 0 <= q.position <= n:
            v.append(f"{tag}: position {q.position} outside 0..{n}")
        if (q.position == 0) != (q.role is QuestionRole.AROUSE_INTEREST):
            v.append(
                f"{tag}: position {q.position} inconsistent with role "
                f"{q.role.value} (position 0 <=> ArouseInterest)"
            )
        if not q.completed_text.endswith("?"):
            v.append(f"{tag}: completed_text does not end with '?'")
        if q.answer == NO_ANSWER and q.evidence_indices:
            v.append(f"{tag}: NO ANSWER question carries evidence_indices")
        for e in q.evidence_indices:
            if not 1 <= e <= n:
                v.append(f"{tag}: evidence index {e} outside 1..{n}")
        if list(q.evidence_indices) != sorted(q.evidence_indices):
            v.append(f"{tag}: evidence_indices not sorted")
        if not 1 <= q.confidence_answer <= 5:
            v.append(f"{tag}: confidence_answer {q.confidence_answer} outside 1..5")
        if not 1 <= q.confidence_role <= 5:
            v.append(f"{tag}: confidence_role {q.confidence_role} outside 1..5")
        if q.position < prev_pos:
            v.append(f"{tag}: question positions not non-decreasing")
        prev_pos = max(prev_pos, q.position)
    return v


# --- JSONL (de)serialization -------------------------------------------------

def _question_to_dict(q: GuidingQuestion) -> dict:
    return {
        "qid": q.qid,
        "raw_text": q.raw_text,
        "completed_text": q.completed_text,
        "position": q.position,
        "role": q.role.value,
        "answer": q.answer,
        "answer_keywords": list(q.answer_keywords),
        "evidence_indices": list(q.evidence_indices),
        "confidence_answer": q.confidence_answer,
        "confidence_role": q.confidence_role,
    }


def _question_from_dict(d: dict, doc_id: str) -> GuidingQuestion:
    try:
        role = QuestionRole.parse(str(d["role"]))
    except ValueError as exc:
        raise CorpusValidationError(doc_id, [f"role: {exc}"]) from exc
    try:
        return GuidingQuestion(
            qid=str(d["qid"]),
            raw_text=str(d["raw_text"]),
            completed_text=str(d["completed_text"]),
            position=int(d["position"]),
            role=role,
            answer=str(d["answer"]),
            answer_keywords=tuple(str(k) for k in d["answer_keywords"]),
            evidence_indices=tuple(int(i) for i in d["evidence_indices"]),
            confidence_answer=int(d["confidence_answer"]),
            confidence_role=int(d["confidence_role"]),
        )
    except KeyError as exc:
        raise CorpusFormatError(f"document {doc_id!r}: question missing field {exc}") from exc


def document_to_dict(doc: AnnotatedDocument) -> dict:
    d = doc.document
    return {
        "doc_id": d.doc_id,
        "domain": d.domain,
        "title": d.title,
        "sentences": list(d.sentences),
        "source_meta": dict(d.source_meta),
        "questions": [_question_to_dict(q) for q in doc.questions],
    }


def document_from_dict(d: dict) -> AnnotatedDocument:
    try:
        doc_id = str(d["doc_id"])
        document = Document(
            doc_id=doc_id,
            domain=str(d["domain"]),
            title=str(d["title"]),
            sentences=tuple(str(s) for s in d["sentences"]),
            source_meta={str(k): str(v) for k, v in d.get("source_meta", {}).items()},
        )
        questions = tuple(_question_from_dict(q, doc_id) for q in d.get("questions", []))
    except KeyError as exc:
        raise CorpusFormatError(f"record missing field {exc}") from exc
    return AnnotatedDocument(document=document, questions=questions)


def save_corpus(docs: Iterable[AnnotatedDocument], path: str | Path) -> None:
    """Write JSONL, one record per line, deterministic field order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(document_to_dict(doc), ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> list[AnnotatedDocument]:
    """Load and validate a corpus file; order preserved.

    Raises CorpusFormatError with the line number on malformed JSON and
    CorpusValidationError naming the doc_id and rule on invariant violations.
    """
    path = Path(path)
    docs: list[AnnotatedDocument] = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed JSON ({exc})") from exc
            doc = document_from_dict(raw)
            violations = validate_record(doc)
            if violations:
                raise CorpusValidationError(doc.doc_id, violations)
            docs.append(doc)
    return docs


def with_questions(doc: AnnotatedDocument, questions: Iterable[GuidingQuestion]) -> AnnotatedDocument:
    qs = tuple(sorted(questions, key=lambda q: q.position))
    return replace(doc, questions=qs)
