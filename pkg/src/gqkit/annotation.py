"""LLM-backed annotation steps: question completion, answering, role
identification, confidence triage, and the delete-and-smooth coherence editor.

Step order within a document is fixed (completion -> answering -> role
identification): role identification refuses question/answer pairs whose
answer is missing. Parsing is strict; a malformed model response is re-asked
up to ``MAX_REASKS`` times and then surfaces as a structured error carrying
the raw text.
"""
from __future__ import annotations

import json
import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .backends import DEFAULT_ANNOTATION_TEMPERATURE, GenerationBackend, GenerationRequest
from .corpus import NO_ANSWER, AnnotatedDocument, Document, GuidingQuestion, QuestionRole
from .prompts import load_template, render
from .textutil import normalize_ws

log = logging.getLogger(__name__)

MAX_REASKS = 2
CONTEXT_RADIUS = 5  # 10 surrounding sentences: 5 on each side

ROLE_DEFINITIONS = """\
Arouse Interest: a question that appears in the title of the article to catch the reader's attention before they start reading. Example: "Why do house-hunting ants recruit in both directions?"
Frame Purpose: a question that surfaces near the beginning of the article to set the agenda of central topics to be explored, often picked up again later. Example: "Is it possible to achieve predictable refractive changes?"
Organize Discourse: a question that acts like a subheading, introducing a shift in information and what the following section will discuss. Example: "What are the drawbacks of telecommuting?"
Establish Claim: a question used to introduce and emphasize the writer's own argument; the writer gives a clear answer close to the question. Example: "What contributes to a corporation's positive image over the long term?"
Provoke Thought: a genuine question that is not answered anywhere in the text and is meant to stimulate the reader's own thinking. Example: "How much privacy and freedom should citizens sacrifice to feel safe?"\
"""


class AnnotationError(RuntimeError):
    pass


class AnnotationParseError(AnnotationError):
    """Model output did not follow the requested format after all re-asks."""

    def __init__(self, message: str, raw_text: str):
        self.raw_text = raw_text
        super().__init__(f"{message}\n--- raw model output ---\n{raw_text}")


class AnnotationValidationError(AnnotationError):
    """Model output parsed but carries an out-of-contract value."""


class ContaminationError(AnnotationError):
    """Smoothing output is contaminated (removed sentence or mask token)."""


class MaskRetainedError(ContaminationError):
    """Smoothing output still contains the [MASK] placeholder after retries."""


class TriageTask(enum.Enum):
    ANSWERING = "Answering"
    ROLE_ID = "RoleId"


@dataclass(frozen=True)
class TriageItem:
    qid: str
    task: TriageTask
    confidence: int
    flagged: bool


@dataclass(frozen=True)
class AnnotationBatch:
    """Per-document completion batch: (qid, question text, local context)."""

    document: Document
    items: tuple[tuple[str, str, str], ...]


def context_window(doc: Document, position: int, radius: int = CONTEXT_RADIUS) -> str:
    """The up-to-``2*radius`` sentences around a position, question excluded."""
    if position == 0:
        lo, hi = 1, min(doc.n, 2 * radius)
        return " ".join(doc.sentences[lo - 1 : hi])
    lo = max(1, position - radius)
    hi = min(doc.n, position + radius)
    parts = [doc.sentence(i) for i in range(lo, hi + 1) if i != position]
    return " ".join(parts)


def build_completion_batch(adoc: AnnotatedDocument) -> AnnotationBatch:
    items = tuple(
        (q.qid, q.raw_text, context_window(adoc.document, q.position))
        for q in adoc.questions
    )
    return AnnotationBatch(document=adoc.document, items=items)


def render_marked_article(doc: Document, positions: Iterable[int]) -> str:
    """Article text with "[Question]" inserted before each marked sentence.

    Position 0 marks the title. The title is included when present so title
    questions stay addressable.
    """
    marked = set(positions)
    parts: list[str] = []
    if doc.title.strip():
        parts.append(("[Question] " if 0 in marked else "") + doc.title.strip())
    for idx, sent in enumerate(doc.sentences, start=1):
        parts.append(("[Question] " if idx in marked else "") + sent)
    return " ".join(parts)


# --- model-output parsing ----------------------------------------------------

def parse_labeled_lines(text: str, labels: Sequence[str]) -> list[tuple[str, int, str]]:
    """Parse "Label N: value" lines; later unlabeled lines continue the value."""
    out: list[tuple[str, int, str]] = []
    for line in text.splitlines():
        stripped = line.strip()
        matched = False
        for label in labels:
            if stripped.lower().startswith(label.lower()):
                rest = stripped[len(label):].lstrip()
                num, sep, value = rest.partition(":")
                if sep and num.strip().isdigit():
                    out.append((label, int(num.strip()), value.strip()))
                    matched = True
                    break
        if not matched and stripped and out:
            label, num, value = out[-1]
            out[-1] = (label, num, (value + " " + stripped).strip() if value else stripped)
    return out


def _values_for(parsed: list[tuple[str, int, str]], label: str, count: int,
                raw: str) -> list[str]:
    by_index = {num: value for lab, num, value in parsed if lab == label}
    if sorted(by_index) != list(range(1, count + 1)):
        raise AnnotationParseError(
            f"expected '{label} 1..{count}:' lines, found indices {sorted(by_index)}", raw
        )
    return [by_index[i] for i in range(1, count + 1)]


def _ask(backend: GenerationBackend, prompt: str,
         parse: Callable[[str], object],
         temperature: float = DEFAULT_ANNOTATION_TEMPERATURE,
         max_reasks: int = MAX_REASKS):
    """Generate and parse, re-asking on parse failures up to max_reasks."""
    last: AnnotationParseError | None = None
    for _ in range(max_reasks + 1):
        raw = backend.generate_text(GenerationRequest(prompt=prompt, temperature=temperature))
        try:
            return parse(raw)
        except AnnotationParseError as exc:
            last = exc
    raise last


# --- S2: question completion --------------------------------------------------

def complete_questions(batch: AnnotationBatch, backend: GenerationBackend,
                       template_dir: str | Path | None = None) -> list[str]:
    """Return one self-contained question per batch item, order preserved."""
    if not batch.items:
        raise ValueError("completion batch must contain at least one item")
    template = load_template("question_completion", template_dir)
    prompt = render(
        template,
        items=[{"question": q, "context of question": ctx} for _, q, ctx in batch.items],
    )

    def parse(raw: str) -> list[str]:
        parsed = parse_labeled_lines(raw, ["Question"])
        values = _values_for(parsed, "Question", len(batch.items), raw)
        for v in values:
            if not v.endswith("?"):
                raise AnnotationParseError(f"completed question does not end with '?': {v!r}", raw)
        return values

    return _ask(backend, prompt, parse)


# --- S3: question answering ---------------------------------------------------

def answer_questions(doc: Document, questions: Sequence[GuidingQuestion],
                     backend: GenerationBackend,
                     template_dir: str | Path | None = None) -> list[tuple[str, int]]:
    """Answer each question from the article; returns (answer|NO_ANSWER, confidence)."""
    if not questions:
        return []
    article = render_marked_article(doc, (q.position for q in questions))
    template = load_template("question_answering", template_dir)
    prompt = render(
        template,
        scalars={"article with questions marked": article},
        items=[{"question": q.completed_text or q.raw_text} for q in questions],
    )
    n = len(questions)

    def parse(raw: str) -> list[tuple[str, int]]:
        parsed = parse_labeled_lines(raw, ["Answer", "Confidence"])
        answers = _values_for(parsed, "Answer", n, raw)
        confidences = _values_for(parsed, "Confidence", n, raw)
        out = []
        for ans, conf in zip(answers, confidences):
            try:
                level = int(conf.split()[0])
            except (ValueError, IndexError):
                raise AnnotationParseError(f"unparseable confidence {conf!r}", raw)
            norm = ans.strip().rstrip(".").lower()
            answer = NO_ANSWER if norm in ("no answer", "no_answer", "none") else ans.strip()
            out.append((answer, level))
        return out

    results = _ask(backend, prompt, parse)
    for _, level in results:
        if not 1 <= level <= 5:
            raise AnnotationValidationError(f"confidence {level} outside 1..5")
    return results


# --- S5: question role identification ------------------------------------------

def identify_roles(doc: Document, qa_pairs: Sequence[tuple[str, str]],
                   backend: GenerationBackend,
                   template_dir: str | Path | None = None) -> list[tuple[QuestionRole, str, int]]:
    """Identify each question's role given its answer; returns (role, analysis, confidence).

    Answers must already exist: this step runs last so earlier outputs can
    inform the judgement.
    """
    if not qa_pairs:
        return []
    for q, a in qa_pairs:
        if not a:
            raise ValueError(f"question {q!r} has no answer yet; run answering first")
    template = load_template("role_identification", template_dir)
    prompt = render(
        template,
        scalars={"article": doc.text(), "role definitions": ROLE_DEFINITIONS},
        items=[{"question": q, "answer to question": a} for q, a in qa_pairs],
    )
    n = len(qa_pairs)

    def parse(raw: str) -> list[tuple[QuestionRole, str, int]]:
        parsed = parse_labeled_lines(raw, ["Analysis", "Role", "Confidence"])
        analyses = _values_for(parsed, "Analysis", n, raw)
        roles = _values_for(parsed, "Role", n, raw)
        confidences = _values_for(parsed, "Confidence", n, raw)
        out = []
        for analysis, role_name, conf in zip(analyses, roles, confidences):
            try:
                role = QuestionRole.parse(role_name.rstrip("."))
            except ValueError:
                raise AnnotationParseError(f"role {role_name!r} outside the taxonomy", raw)
            try:
                level = int(conf.split()[0])
            except (ValueError, IndexError):
                raise AnnotationParseError(f"unparseable confidence {conf!r}", raw)
            out.append((role, analysis, level))
        return out

    results = _ask(backend, prompt, parse)
    for _, _, level in results:
        if not 1 <= level <= 5:
            raise AnnotationValidationError(f"confidence {level} outside 1..5")
    return results


# --- S6: confidence triage ------------------------------------------------------

def triage_low_confidence(questions: Sequence[GuidingQuestion], threshold: int = 1) -> list[TriageItem]:
    """Build triage items; a question is flagged iff confidence <= threshold on BOTH tasks."""
    if not 1 <= threshold <= 5:
        raise ValueError("threshold must be in 1..5")
    items: list[TriageItem] = []
    for q in questions:
        flagged = q.confidence_answer <= threshold and q.confidence_role <= threshold
        items.append(TriageItem(q.qid, TriageTask.ANSWERING, q.confidence_answer, flagged))
        items.append(TriageItem(q.qid, TriageTask.ROLE_ID, q.confidence_role, flagged))
    return items


def write_review_queue(items: Iterable[TriageItem], path: str | Path) -> int:
    """Serialize flagged triage items as JSONL; returns the number written."""
    written = 0
    with Path(path).open("w", encoding="utf-8") as f:
        for item in items:
            if not item.flagged:
                continue
            f.write(json.dumps({
                "qid": item.qid,
                "task": item.task.value,
                "confidence": item.confidence,
                "flagged": item.flagged,
            }, ensure_ascii=False) + "\n")
            written += 1
    return written


# --- delete-and-smooth ----------------------------------------------------------

def smooth_gap(left: Sequence[str], right: Sequence[str], removed_text: str,
               backend: GenerationBackend,
               template_dir: str | Path | None = None) -> str:
    """Mask a removed sentence between two context windows and restore coherence."""
    paragraph = " ".join([*left, "[MASK]", *right])
    template = load_template("coherence_smoothing", template_dir)
    prompt = render(template, scalars={"paragraph with a missing sentence": paragraph})

    def parse(raw: str) -> str:
        marker = "coherent paragraph:"
        idx = raw.lower().find(marker)
        if idx < 0:
            raise AnnotationParseError("missing 'Coherent paragraph:' line", raw)
        out = raw[idx + len(marker):].strip()
        if "[MASK]" in out:
            raise AnnotationParseError("smoothing output still contains [MASK]", raw)
        return out

    try:
        out = _ask(backend, prompt, parse)
    except AnnotationParseError as exc:
        if "[MASK]" in exc.raw_text:
            raise MaskRetainedError(str(exc)) from exc
        raise
    if normalize_ws(removed_text) and normalize_ws(removed_text) in normalize_ws(out):
        raise ContaminationError(
            f"smoothing output reintroduced the removed sentence: {removed_text!r}"
        )
    return out


def delete_and_smooth(doc: Document, remove_index: int, backend: GenerationBackend,
                      template_dir: str | Path | None = None) -> str:
    """Remove one sentence and return the smoothed local paragraph.

    The paragraph is built from up to 5 sentences on each side of the removed
    sentence, clipped to document bounds.
    """
    if not 1 <= remove_index <= doc.n:
        raise ValueError(f"remove_index {remove_index} outside 1..{doc.n}")
    left = [doc.sentence(i) for i in range(max(1, remove_index - 5), remove_index)]
    right = [doc.sentence(i) for i in range(remove_index + 1, min(doc.n, remove_index + 5) + 1)]
    return smooth_gap(left, right, doc.sentence(remove_index), backend, template_dir)
