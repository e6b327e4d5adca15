"""Turn annotated documents into training/inference formats: question removal
with coherence smoothing plus a small rate of noise removals, TF-IDF answer
keywords, the per-paradigm example builders, the joint flattening template and
its inverse parser, and context truncation.

Joint template, one record per question, records joined by " | "::

    Position: <anchor sentence> # Answer: <kw, kw, ...> # Question: <q>

the role-augmented variant inserts ``Role: <role>`` between Position and
Answer. Literal '#', '|' and '\\' inside payloads are escaped ("\\#", "\\|",
"\\\\") so parsing is lossless; keywords must be non-empty, comma-free, and
trimmed for the roundtrip law to hold.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .annotation import smooth_gap
from .backends import GenerationBackend
from .corpus import NO_ANSWER, AnnotatedDocument, Document, GuidingQuestion, QuestionRole
from .extraction import segment_sentences
from .textutil import STOPWORDS, word_tokens

log = logging.getLogger(__name__)

NOISE_EXCLUSION_DISTANCE = 10
QUESTION_MARK = "[Question]"

TASK_PREFIXES = {
    "PP": "predict positions: ",
    "AE": "extract answer: ",
    "QG": "generate question: ",
}


class Task(enum.Enum):
    PP = "PP"
    AE = "AE"
    QG = "QG"
    JOINT = "Joint"
    JOINT_R = "JointR"


class DataGenError(RuntimeError):
    pass


class JointParseError(ValueError):
    def __init__(self, message: str, raw_text: str, record_index: int | None = None):
        self.raw_text = raw_text
        self.record_index = record_index
        where = f" (record {record_index})" if record_index is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class SmoothedDocument:
    """A document with question sentences removed and gaps smoothed.

    index_map maps original 1-based indices to smoothed indices; removed
    sentences map to None. noise_indices are the original indices of the
    randomly smoothed non-question sentences.
    """

    doc_id: str
    sentences: tuple[str, ...]
    index_map: dict[int, int | None]
    noise_indices: tuple[int, ...] = ()

    def text(self) -> str:
        return " ".join(self.sentences)

    def anchor_for(self, question_position: int) -> int | None:
        """Smoothed index of the retained sentence preceding a question slot."""
        for orig in range(question_position - 1, 0, -1):
            mapped = self.index_map.get(orig)
            if mapped is not None:
                return mapped
            if orig in self.noise_indices:
                raise DataGenError(
                    f"question at {question_position} lost its anchor to a noise "
                    f"removal at {orig}; the exclusion rule should prevent this"
                )
        return None


@dataclass(frozen=True)
class TrainingExample:
    task: Task
    input_text: str
    target_text: str
    doc_id: str
    qid: str  # "ALL" for document-level tasks

    def __post_init__(self):
        if not self.input_text or not self.target_text:
            raise ValueError("input_text and target_text must be non-empty")


@dataclass(frozen=True)
class JointEntry:
    anchor_sentence: str
    answer_keywords: tuple[str, ...]
    question: str
    role: QuestionRole | None = None

    def __post_init__(self):
        object.__setattr__(self, "answer_keywords", tuple(self.answer_keywords))
        if not self.question.endswith("?"):
            raise ValueError(f"joint entry question must end with '?': {self.question!r}")


# --- question removal with smoothing -------------------------------------------

def select_noise_indices(n: int, question_positions: Sequence[int], noise_rate: float,
                         rng: random.Random,
                         exclusion: int = NOISE_EXCLUSION_DISTANCE) -> list[int]:
    """Pick ceil(noise_rate*n) non-question sentences, each at distance >=
    `exclusion` from every question and every earlier pick."""
    target = math.ceil(noise_rate * n) if noise_rate > 0 else 0
    if target == 0:
        return []
    eligible = [
        i for i in range(1, n + 1)
        if all(abs(i - q) >= exclusion for q in question_positions)
    ]
    picked: list[int] = []
    while eligible and len(picked) < target:
        choice = rng.choice(eligible)
        picked.append(choice)
        eligible = [i for i in eligible if abs(i - choice) >= exclusion]
    if len(picked) < target:
        log.warning(
            "only %d of %d noise removals possible under the distance-%d exclusion",
            len(picked), target, exclusion,
        )
    return sorted(picked)


@dataclass
class _Slot:
    ids: list[int]
    text: str


def prepare_document(adoc: AnnotatedDocument, backend: GenerationBackend,
                     noise_rate: float = 0.01, seed: int = 0,
                     template_dir: str | Path | None = None,
                     window: int = 5) -> SmoothedDocument:
    """Remove every question sentence plus seeded noise, smoothing each gap.

    All removal targets are deleted first; each gap is then smoothed in
    ascending order with up to `window` retained sentences per side, so no
    pending removal ever leaks into an editing context.
    """
    doc = adoc.document
    question_positions = sorted({q.position for q in adoc.questions if q.position >= 1})
    rng = random.Random(seed)
    noise = select_noise_indices(doc.n, question_positions, noise_rate, rng)
    removals = sorted(set(question_positions) | set(noise))

    slots: list[_Slot] = []
    gaps: list[tuple[int, int]] = []  # (original index of removal, slot position of gap)
    for idx, sent in enumerate(doc.sentences, start=1):
        if idx in removals:
            gaps.append((idx, len(slots)))
        else:
            slots.append(_Slot(ids=[idx], text=sent))

    shift = 0
    for orig_idx, gap_pos in gaps:
        pos = min(max(gap_pos + shift, 0), len(slots))
        lo = max(0, pos - window)
        hi = min(len(slots), pos + window)
        left = [s.text for s in slots[lo:pos]]
        right = [s.text for s in slots[pos:hi]]
        paragraph = smooth_gap(left, right, doc.sentence(orig_idx), backend, template_dir)
        new_texts = segment_sentences(paragraph)
        old = slots[lo:hi]
        slots[lo:hi] = _realign(old, new_texts)
        shift += (len(new_texts) - len(old))

    index_map: dict[int, int | None] = {i: None for i in removals}
    for smoothed_pos, slot in enumerate(slots, start=1):
        for orig in slot.ids:
            index_map[orig] = smoothed_pos
    return SmoothedDocument(
        doc_id=doc.doc_id,
        sentences=tuple(s.text for s in slots),
        index_map=index_map,
        noise_indices=tuple(noise),
    )


def _realign(old: list[_Slot], new_texts: list[str]) -> list[_Slot]:
    """Carry original ids onto the edited window, positionally.

    Exact when the editor preserves the sentence count; otherwise surplus old
    ids collapse onto the last new slot (keeps index_map monotone).
    """
    if not new_texts:
        if not old:
            return []
        # editor emptied the window against instructions; keep the originals
        log.warning("smoothing returned an empty paragraph for a non-empty window; kept original text")
        return old
    new_slots = [_Slot(ids=[], text=t) for t in new_texts]
    for k, s in enumerate(old):
        new_slots[min(k, len(new_slots) - 1)].ids.extend(s.ids)
    return new_slots


# --- answer keywords ---------------------------------------------------------------

def extract_answer_keywords(evidence_sentences: Sequence[str], doc: Document,
                            k: int = 8) -> list[str]:
    """Top-k content words of the evidence, ranked by TF-IDF against the
    document's sentences as the collection; original casing preserved."""
    if not evidence_sentences:
        raise ValueError("evidence_sentences must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    n_docs = max(1, doc.n)
    df: dict[str, int] = {}
    for sent in doc.sentences:
        for tok in set(word_tokens(sent)):
            df[tok] = df.get(tok, 0) + 1

    evidence_text = " ".join(evidence_sentences)
    counts: dict[str, int] = {}
    surface: dict[str, str] = {}
    order: dict[str, int] = {}
    position = 0
    for raw_tok in evidence_text.split():
        for tok in word_tokens(raw_tok):
            position += 1
            if tok in STOPWORDS or tok.isdigit():
                continue
            counts[tok] = counts.get(tok, 0) + 1
            if tok not in surface:
                # recover the token's casing as first seen
                start = raw_tok.lower().find(tok)
                surface[tok] = raw_tok[start : start + len(tok)] if start >= 0 else tok
                order[tok] = position

    if not counts:
        log.warning("evidence contains only stopwords; no keywords extracted")
        return []
    scored = [
        (counts[t] * math.log(n_docs / df.get(t, 1)), order[t], t) for t in counts
    ]
    scored.sort(key=lambda x: (-x[0], x[1]))
    return [surface[t] for _, _, t in scored[:k]]


# --- joint template -----------------------------------------------------------------

def _escape(payload: str) -> str:
    return payload.replace("\\", "\\\\").replace("#", "\\#").replace("|", "\\|")


def _unescape(payload: str) -> str:
    out = []
    i = 0
    while i < len(payload):
        ch = payload[i]
        if ch == "\\" and i + 1 < len(payload) and payload[i + 1] in "\\#|":
            out.append(payload[i + 1])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _format_keywords(keywords: Sequence[str]) -> str:
    return ", ".join(keywords) if keywords else NO_ANSWER


def _parse_keywords(payload: str) -> tuple[str, ...]:
    payload = payload.strip()
    if not payload or payload == NO_ANSWER:
        return ()
    return tuple(kw.strip() for kw in payload.split(",") if kw.strip())


def flatten_joint(entries: Sequence[JointEntry], with_roles: bool) -> str:
    """Render entries in the joint template; inverse of :func:`parse_joint`."""
    if not entries:
        raise ValueError("entries must be non-empty")
    records = []
    for e in entries:
        if with_roles and e.role is None:
            raise ValueError("with_roles requires a role on every entry")
        parts = [f"Position: {_escape(e.anchor_sentence)}"]
        if with_roles:
            parts.append(f"Role: {e.role.value}")
        parts.append(f"Answer: {_escape(_format_keywords(e.answer_keywords))}")
        parts.append(f"Question: {_escape(e.question)}")
        records.append(" # ".join(parts))
    return " | ".join(records)


def parse_joint(text: str, with_roles: bool, strict: bool = True) -> list[JointEntry]:
    """Parse a joint-template sequence back into entries.

    Strict mode raises JointParseError (with the record offset) on the first
    malformed record; tolerant mode skips malformed records and fails only
    when nothing parses.
    """
    stripped = text.strip()
    if stripped.endswith("|"):
        stripped = stripped[:-1].rstrip()
    if not stripped:
        raise JointParseError("empty joint sequence", text)

    entries: list[JointEntry] = []
    errors: list[JointParseError] = []
    for rec_idx, record in enumerate(stripped.split(" | ")):
        try:
            entries.append(_parse_record(record.strip(), with_roles, rec_idx, text))
        except JointParseError as exc:
            if strict:
                raise
            errors.append(exc)
            log.warning("skipping malformed joint record %d: %s", rec_idx, exc)
    if not entries:
        raise JointParseError(f"no parseable records ({len(errors)} malformed)", text)
    return entries


def _parse_record(record: str, with_roles: bool, rec_idx: int, raw: str) -> JointEntry:
    labels = ["Position", "Role", "Answer", "Question"] if with_roles else \
             ["Position", "Answer", "Question"]
    fields = record.split(" # ")
    if len(fields) != len(labels):
        raise JointParseError(
            f"expected fields {labels}, got {len(fields)} field(s)", raw, rec_idx
        )
    values = {}
    for label, field_text in zip(labels, fields):
        prefix = label + ":"
        ft = field_text.strip()
        if not ft.startswith(prefix):
            raise JointParseError(f"field does not start with {prefix!r}: {ft[:40]!r}",
                                  raw, rec_idx)
        values[label] = _unescape(ft[len(prefix):].strip())
    role = None
    if with_roles:
        try:
            role = QuestionRole.parse(values["Role"])
        except ValueError as exc:
            raise JointParseError(str(exc), raw, rec_idx)
    if not values["Question"].endswith("?"):
        raise JointParseError(f"question does not end with '?': {values['Question']!r}",
                              raw, rec_idx)
    return JointEntry(
        anchor_sentence=values["Position"],
        answer_keywords=_parse_keywords(values["Answer"]),
        question=values["Question"],
        role=role,
    )


# --- training example builders ---------------------------------------------------------

def _marked_text(sentences: Sequence[str], anchor: int) -> str:
    """Smoothed document text with [Question] inserted after the anchor index."""
    parts = list(sentences[:anchor]) + [QUESTION_MARK] + list(sentences[anchor:])
    return " ".join(parts)


def _answer_text(q: GuidingQuestion) -> str:
    return _format_keywords(q.answer_keywords) if q.has_answer else NO_ANSWER


def _eligible_questions(smoothed: SmoothedDocument, questions: Sequence[GuidingQuestion],
                        include_title: bool) -> list[tuple[GuidingQuestion, int | None]]:
    out = []
    for q in sorted(questions, key=lambda q: q.position):
        if q.position == 0:
            if include_title:
                out.append((q, None))  # anchored at the title
            continue
        anchor = smoothed.anchor_for(q.position)
        if anchor is None:
            log.warning("question %s has no preceding retained sentence; skipped", q.qid)
            continue
        out.append((q, anchor))
    return out


def make_training_examples(smoothed: SmoothedDocument, questions: Sequence[GuidingQuestion],
                           paradigm: str, title: str = "",
                           include_title: bool = False) -> list[TrainingExample]:
    """Build examples for one document under a paradigm.

    Paradigms: "PP", "AE", "QG", "Multitask" (union of the three, prefixed),
    "Joint", "JointR".
    """
    eligible = _eligible_questions(smoothed, questions, include_title)
    if not eligible:
        return []
    doc_text = smoothed.text()
    doc_id = smoothed.doc_id

    def anchor_sentence(q: GuidingQuestion, anchor: int | None) -> str:
        return title if anchor is None else smoothed.sentences[anchor - 1]

    def pp(prefix: str = "") -> list[TrainingExample]:
        target = " | ".join(anchor_sentence(q, a) for q, a in eligible)
        return [TrainingExample(Task.PP, prefix + doc_text, target, doc_id, "ALL")]

    def ae(prefix: str = "") -> list[TrainingExample]:
        out = []
        for q, a in eligible:
            marked = _marked_text(smoothed.sentences, a if a is not None else 0)
            out.append(TrainingExample(Task.AE, prefix + marked, _answer_text(q), doc_id, q.qid))
        return out

    def qg(prefix: str = "") -> list[TrainingExample]:
        out = []
        for q, a in eligible:
            marked = _marked_text(smoothed.sentences, a if a is not None else 0)
            inp = f"{prefix}{marked} Answer: {_answer_text(q)}"
            out.append(TrainingExample(Task.QG, inp, q.completed_text, doc_id, q.qid))
        return out

    def joint(with_roles: bool) -> list[TrainingExample]:
        entries = [
            JointEntry(
                anchor_sentence=anchor_sentence(q, a),
                answer_keywords=q.answer_keywords if q.has_answer else (),
                question=q.completed_text,
                role=q.role if with_roles else None,
            )
            for q, a in eligible
        ]
        task = Task.JOINT_R if with_roles else Task.JOINT
        return [TrainingExample(task, doc_text, flatten_joint(entries, with_roles), doc_id, "ALL")]

    if paradigm == "PP":
        return pp()
    if paradigm == "AE":
        return ae()
    if paradigm == "QG":
        return qg()
    if paradigm == "Multitask":
        return (pp(TASK_PREFIXES["PP"]) + ae(TASK_PREFIXES["AE"]) + qg(TASK_PREFIXES["QG"]))
    if paradigm == "Joint":
        return joint(False)
    if paradigm == "JointR":
        return joint(True)
    raise ValueError(f"unknown paradigm {paradigm!r}")


# --- context truncation ------------------------------------------------------------------

@dataclass(frozen=True)
class DocumentSegment:
    start: int  # original 1-based index of the first sentence
    end: int    # inclusive
    sentences: tuple[str, ...]

    def text(self) -> str:
        return " ".join(self.sentences)


def kept_span(n: int, first_q: int, last_q: int, margin: int = 5) -> tuple[int, int]:
    """Raw kept-span bounds: [max(0, p0 - margin), min(n, pm + margin)]."""
    return max(0, first_q - margin), min(n, last_q + margin)


def truncate_context(doc: Document, first_q: int, last_q: int, max_len: int,
                     anchors: Sequence[int] = ()) -> list[DocumentSegment]:
    """Keep the question-bearing span; split it when it exceeds max_len tokens.

    Tokens are whitespace words (downstream trainers own real tokenization).
    Splits produce segments of near-equal sentence counts, never within 3
    sentences of any given anchor.
    """
    if not 1 <= first_q <= last_q <= doc.n:
        raise ValueError(f"need 1 <= first_q <= last_q <= {doc.n}")
    lo, hi = kept_span(doc.n, first_q, last_q)
    lo = max(1, lo)
    kept = [doc.sentence(i) for i in range(lo, hi + 1)]
    token_counts = [len(s.split()) for s in kept]
    if max(token_counts) >= max_len:
        raise ValueError("a single sentence exceeds max_len tokens")
    total = sum(token_counts)
    if total < max_len:
        return [DocumentSegment(start=lo, end=hi, sentences=tuple(kept))]

    def boundary_ok(cut: int) -> bool:
        # cut after kept[cut-1]; distance to an anchor measured on original ids
        left_id, right_id = lo + cut - 1, lo + cut
        return all(abs(left_id - a) >= 3 and abs(right_id - a) >= 3 for a in anchors)

    n_kept = len(kept)
    for k in range(math.ceil(total / max_len), n_kept + 1):
        cuts = [round(j * n_kept / k) for j in range(1, k)]
        cuts = [min(max(c, 1), n_kept - 1) for c in cuts]
        adjusted: list[int] = []
        ok = True
        for c in cuts:
            choice = None
            for delta in range(n_kept):
                for cand in (c - delta, c + delta):
                    if 0 < cand < n_kept and boundary_ok(cand) and cand not in adjusted:
                        choice = cand
                        break
                if choice is not None:
                    break
            if choice is None:
                ok = False
                break
            adjusted.append(choice)
        if not ok:
            continue
        adjusted = sorted(set(adjusted))
        bounds = [0, *adjusted, n_kept]
        segments = []
        fits = True
        for a, b in zip(bounds, bounds[1:]):
            if a >= b or sum(token_counts[a:b]) >= max_len:
                fits = False
                break
            segments.append(
                DocumentSegment(start=lo + a, end=lo + b - 1, sentences=tuple(kept[a:b]))
            )
        if fits:
            return segments
    raise DataGenError("could not split the kept span under max_len with the anchor rule")


# --- JSONL I/O ------------------------------------------------------------------------------

def save_training_examples(examples: Iterable[TrainingExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps({
                "task": ex.task.value,
                "input_text": ex.input_text,
                "target_text": ex.target_text,
                "doc_id": ex.doc_id,
                "qid": ex.qid,
            }, ensure_ascii=False) + "\n")


def load_training_examples(path: str | Path) -> list[TrainingExample]:
    out = []
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                out.append(TrainingExample(
                    task=Task(d["task"]),
                    input_text=d["input_text"],
                    target_text=d["target_text"],
                    doc_id=d["doc_id"],
                    qid=d["qid"],
                ))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataGenError(f"{path}:{lineno}: bad training example: {exc}") from exc
    return out
