"""Question-set generation against any generation backend: the fine-tuned
paradigms (Pipeline, Multitask, Joint, JointR) served over the wire, plus
zero-shot prompting. Model output is parsed, anchors are relocated onto the
input document, and raw text is kept for provenance.

Fine-tuned joint output is parsed strictly (a malformed record is an error);
zero-shot block parsing is tolerant and salvages whatever parses.
"""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .backends import GenerationBackend, GenerationRequest
from .corpus import Document, QuestionRole
from .datagen import TASK_PREFIXES, DocumentSegment, parse_joint, truncate_context
from .extraction import relocate_anchor
from .prompts import load_template, render

log = logging.getLogger(__name__)

PARADIGMS = ("Pipeline", "Multitask", "Joint", "JointR", "ZeroShot")
FINETUNED_TEMPERATURE = 0.0
ZERO_SHOT_TEMPERATURE = 0.7


class GenerationError(RuntimeError):
    def __init__(self, message: str, raw_text: str = ""):
        self.raw_text = raw_text
        super().__init__(message if not raw_text else f"{message}\n--- raw ---\n{raw_text}")


@dataclass(frozen=True)
class GeneratedItem:
    question: str
    position: int
    answer_keywords: tuple[str, ...] = ()
    role: QuestionRole | None = None
    raw_anchor: str = ""


@dataclass(frozen=True)
class GeneratedQuestionSet:
    doc_id: str
    paradigm: str
    items: tuple[GeneratedItem, ...] = ()
    raw_outputs: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "raw_outputs", tuple(self.raw_outputs))


def _generate(backend: GenerationBackend, prompt: str, temperature: float,
              max_tokens: int = 1024) -> str:
    return backend.generate_text(
        GenerationRequest(prompt=prompt, temperature=temperature, max_tokens=max_tokens)
    )


def _sorted_items(items: Sequence[GeneratedItem]) -> tuple[GeneratedItem, ...]:
    return tuple(sorted(items, key=lambda it: it.position))


# --- fine-tuned paradigms -------------------------------------------------------

def run_finetuned(doc: Document, paradigm: str, backend: GenerationBackend,
                  max_input_tokens: int | None = None,
                  concurrency: int = 4) -> GeneratedQuestionSet:
    """Generate a question set with a served fine-tuned checkpoint.

    Pipeline/Multitask: one position-prediction pass, anchors relocated, then
    per-question answer-extraction and question-generation calls. Joint/JointR:
    one pass parsed by the joint template. Long documents are segmented and
    merged by original index with exact-duplicate dedup.
    """
    if paradigm not in ("Pipeline", "Multitask", "Joint", "JointR"):
        raise ValueError(f"unknown fine-tuned paradigm {paradigm!r}")

    segments = _segments_for(doc, max_input_tokens)
    items: list[GeneratedItem] = []
    raws: list[str] = []
    for seg in segments:
        seg_items, seg_raws = _run_finetuned_segment(doc, seg, paradigm, backend, concurrency)
        items.extend(seg_items)
        raws.extend(seg_raws)
    return GeneratedQuestionSet(
        doc_id=doc.doc_id, paradigm=paradigm,
        items=_sorted_items(_dedup(items)), raw_outputs=tuple(raws),
    )


def _segments_for(doc: Document, max_input_tokens: int | None) -> list[DocumentSegment]:
    if max_input_tokens is None or len(doc.text().split()) < max_input_tokens:
        return [DocumentSegment(start=1, end=doc.n, sentences=doc.sentences)]
    return truncate_context(doc, 1, doc.n, max_input_tokens)


def _dedup(items: Sequence[GeneratedItem]) -> list[GeneratedItem]:
    seen = set()
    out = []
    for it in items:
        key = (it.position, it.question)
        if key not in seen:
            seen.add(key)
            out.append(it)
    return out


def _run_finetuned_segment(doc: Document, seg: DocumentSegment, paradigm: str,
                           backend: GenerationBackend,
                           concurrency: int) -> tuple[list[GeneratedItem], list[str]]:
    seg_doc = Document(doc_id=doc.doc_id, domain=doc.domain, title=doc.title,
                       sentences=seg.sentences)
    offset = seg.start - 1
    seg_text = seg_doc.text()
    raws: list[str] = []

    if paradigm in ("Joint", "JointR"):
        raw = _generate(backend, seg_text, FINETUNED_TEMPERATURE)
        raws.append(raw)
        with_roles = paradigm == "JointR"
        try:
            entries = parse_joint(raw, with_roles=with_roles, strict=True)
        except Exception as exc:
            raise GenerationError(f"joint output unparseable: {exc}", raw) from exc
        items = [
            GeneratedItem(
                question=e.question,
                position=relocate_anchor(e.anchor_sentence, seg_doc) + offset,
                answer_keywords=e.answer_keywords,
                role=e.role,
                raw_anchor=e.anchor_sentence,
            )
            for e in entries
        ]
        return items, raws

    # Pipeline / Multitask: PP -> per-anchor AE -> QG
    prefix = TASK_PREFIXES if paradigm == "Multitask" else {"PP": "", "AE": "", "QG": ""}
    pp_raw = _generate(backend, prefix["PP"] + seg_text, FINETUNED_TEMPERATURE)
    raws.append(pp_raw)
    anchors = [a.strip() for a in pp_raw.split("|") if a.strip()]
    if not anchors:
        log.warning("doc %s: position predictor produced no parseable anchors", doc.doc_id)
        return [], raws

    positions = [relocate_anchor(a, seg_doc) for a in anchors]

    def one(anchor_and_pos: tuple[str, int]) -> tuple[GeneratedItem | None, list[str]]:
        anchor, pos = anchor_and_pos
        marked = " ".join([*seg_doc.sentences[:pos], "[Question]", *seg_doc.sentences[pos:]])
        ae_raw = _generate(backend, prefix["AE"] + marked, FINETUNED_TEMPERATURE)
        keywords = tuple(kw.strip() for kw in ae_raw.split(",") if kw.strip())
        qg_raw = _generate(
            backend, f"{prefix['QG']}{marked} Answer: {ae_raw.strip()}", FINETUNED_TEMPERATURE
        )
        question = qg_raw.strip()
        if not question.endswith("?"):
            log.warning("doc %s: dropping non-question output %r", doc.doc_id, question[:60])
            return None, [ae_raw, qg_raw]
        item = GeneratedItem(question=question, position=pos + offset,
                             answer_keywords=keywords, raw_anchor=anchor)
        return item, [ae_raw, qg_raw]

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        results = list(pool.map(one, zip(anchors, positions)))
    items = [item for item, _ in results if item is not None]
    for _, call_raws in results:
        raws.extend(call_raws)
    return items, raws


# --- zero-shot -------------------------------------------------------------------

_BLOCK_RE = re.compile(
    r"Position:\s*(?P<anchor>.+?)\s*\n\s*Answer Keywords:\s*(?P<keywords>.*?)\s*\n\s*Question:\s*(?P<question>.+?)\s*(?:\n|$)",
    re.DOTALL,
)


def run_zero_shot(doc: Document, backend: GenerationBackend,
                  template_dir: str | Path | None = None,
                  temperature: float = ZERO_SHOT_TEMPERATURE) -> GeneratedQuestionSet:
    """Prompt an instruction-following model to place questions in the article.

    Malformed output blocks are skipped with a warning; zero parseable blocks
    is an error carrying the raw text.
    """
    template = load_template("zero_shot_generation", template_dir)
    prompt = render(template, scalars={"article": doc.text()})
    raw = _generate(backend, prompt, temperature)

    items: list[GeneratedItem] = []
    n_blocks = 0
    for block in re.split(r"Output \d+:", raw):
        if not block.strip():
            continue
        n_blocks += 1
        m = _BLOCK_RE.search(block)
        if not m:
            log.warning("doc %s: skipping malformed zero-shot block %r", doc.doc_id, block[:80])
            continue
        question = m.group("question").strip()
        anchor = m.group("anchor").strip()
        if not question.endswith("?") or not anchor:
            log.warning("doc %s: skipping ill-formed zero-shot item %r", doc.doc_id, question[:60])
            continue
        keywords = tuple(kw.strip() for kw in m.group("keywords").split(",") if kw.strip())
        items.append(GeneratedItem(
            question=question,
            position=relocate_anchor(anchor, doc),
            answer_keywords=keywords,
            raw_anchor=anchor,
        ))
    if not items:
        raise GenerationError("no parseable zero-shot output blocks", raw)
    return GeneratedQuestionSet(doc_id=doc.doc_id, paradigm="ZeroShot",
                                items=_sorted_items(items), raw_outputs=(raw,))


# --- question-count control ---------------------------------------------------------

def control_question_count(qset: GeneratedQuestionSet, target: int, doc: Document,
                           backend: GenerationBackend, retry_cap: int = 3,
                           max_input_tokens: int | None = None) -> GeneratedQuestionSet:
    """Force a set to `target` questions: truncate over-generation in position
    order, or re-query in continuation mode until the cap."""
    if target < 1:
        raise ValueError("target must be >= 1")
    items = list(_sorted_items(qset.items))
    if len(items) >= target:
        return replace(qset, items=tuple(items[:target]))

    raws = list(qset.raw_outputs)
    for _ in range(retry_cap):
        if qset.paradigm == "ZeroShot":
            more = run_zero_shot(doc, backend)
        else:
            more = run_finetuned(doc, qset.paradigm, backend, max_input_tokens=max_input_tokens)
        raws.extend(more.raw_outputs)
        items = _dedup([*items, *more.items])
        if len(items) >= target:
            break
    if len(items) < target:
        log.warning("doc %s: only %d of %d questions after %d continuation retries",
                    qset.doc_id, len(items), target, retry_cap)
    return replace(qset, items=_sorted_items(items[:target]) if len(items) > target
                   else _sorted_items(items), raw_outputs=tuple(raws))


# --- JSONL I/O ------------------------------------------------------------------------

def save_question_sets(sets: Sequence[GeneratedQuestionSet], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for s in sets:
            f.write(json.dumps({
                "doc_id": s.doc_id,
                "paradigm": s.paradigm,
                "items": [
                    {
                        "question": it.question,
                        "position": it.position,
                        "answer_keywords": list(it.answer_keywords),
                        "role": it.role.value if it.role else None,
                        "raw_anchor": it.raw_anchor,
                    }
                    for it in s.items
                ],
                "raw_outputs": list(s.raw_outputs),
            }, ensure_ascii=False) + "\n")


def load_question_sets(path: str | Path) -> list[GeneratedQuestionSet]:
    out = []
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                items = tuple(
                    GeneratedItem(
                        question=it["question"],
                        position=int(it["position"]),
                        answer_keywords=tuple(it.get("answer_keywords", ())),
                        role=QuestionRole.parse(it["role"]) if it.get("role") else None,
                        raw_anchor=it.get("raw_anchor", ""),
                    )
                    for it in d["items"]
                )
                out.append(GeneratedQuestionSet(
                    doc_id=d["doc_id"], paradigm=d["paradigm"], items=items,
                    raw_outputs=tuple(d.get("raw_outputs", ())),
                ))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise GenerationError(f"{path}:{lineno}: bad question-set record: {exc}") from exc
    return out
