"""Evaluation suite: Rouge-L, a two-stage Meteor variant, Dist-N, greedy
token-matching semantic scores over an embedding backend, set-level question
evaluation, windowed position-perplexity profiling, the answer-recall
entailment score, and the LLM summary judge.

All lexical metrics share :func:`gqkit.textutil.tokenize` (lowercased words
plus individual punctuation marks). Word perplexity is computed over backend
tokens as exp(-mean logprob).
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .backends import (
    DEFAULT_JUDGE_TEMPERATURE,
    EmbeddingBackend,
    GenerationBackend,
    GenerationRequest,
    ScoringBackend,
    cosine,
)
from .corpus import NO_ANSWER, AnnotatedDocument, Document
from .prompts import load_template, render
from .textutil import porter_stem, tokenize

log = logging.getLogger(__name__)

ROUGE_L_BETA = 1.2
METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0

PPL_OFFSETS = tuple(range(-3, 4))

JUDGE_METRICS = {
    "Coherence": (
        "Coherence (1-5) - the collective quality of all sentences. The summary is "
        "well-structured and well-organized. The summary should not just be a heap of "
        "related information, but should build from sentence to sentence to a coherent "
        "body of information about a topic."
    ),
    "Consistency": (
        "Consistency (1-5) - the factual and conceptual alignment between the summary "
        "and the source article. The summary faithfully and precisely conveys the "
        "messages and ideas from the source material, without distortion or "
        "misinterpretation."
    ),
    "Informativeness": (
        "Informativeness (1-5): the extent to which the summary encapsulates the "
        "essential and relevant information. Informativeness is not merely about "
        "including various pieces of information, but selecting the most crucial "
        "elements that offer a comprehensive understanding of the topic."
    ),
}


class MetricError(ValueError):
    pass


class JudgeParseError(MetricError):
    def __init__(self, message: str, raw_text: str):
        self.raw_text = raw_text
        super().__init__(f"{message}\n--- raw model output ---\n{raw_text}")


# --- Rouge-L -----------------------------------------------------------------

def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str, beta: float = ROUGE_L_BETA) -> float:
    """LCS-based F measure with recall weighted by beta."""
    c = tokenize(candidate)
    r = tokenize(reference)
    if not c or not r:
        return 0.0
    lcs = _lcs_length(c, r)
    if lcs == 0:
        return 0.0
    p = lcs / len(c)
    rec = lcs / len(r)
    return (1.0 + beta * beta) * p * rec / (rec + beta * beta * p)


# --- Meteor (two-stage variant: exact match, then stem match) ------------------

def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Greedy unigram alignment: exact stage first, stem stage on the leftovers."""
    matched: dict[int, int] = {}
    used_ref: set[int] = set()
    for stage in ("exact", "stem"):
        if stage == "stem":
            cand_keys = [porter_stem(t) for t in candidate]
            ref_keys = [porter_stem(t) for t in reference]
        else:
            cand_keys, ref_keys = candidate, reference
        for i, key in enumerate(cand_keys):
            if i in matched:
                continue
            for j, rkey in enumerate(ref_keys):
                if j in used_ref:
                    continue
                if key == rkey:
                    matched[i] = j
                    used_ref.add(j)
                    break
    return sorted(matched.items())


def _count_chunks(alignment: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(candidate: str, reference: str, alpha: float = METEOR_ALPHA,
                gamma: float = METEOR_GAMMA, beta: float = METEOR_BETA) -> float:
    """Meteor with exact+stem unigram matching and the original fragmentation
    penalty; no synonym or paraphrase stage."""
    c = tokenize(candidate)
    r = tokenize(reference)
    if not c or not r:
        return 0.0
    alignment = _align(c, r)
    m = len(alignment)
    if m == 0:
        return 0.0
    precision = m / len(c)
    recall = m / len(r)
    f_mean = precision * recall / (alpha * precision + (1.0 - alpha) * recall)
    frag = _count_chunks(alignment) / m
    penalty = gamma * frag**beta
    return f_mean * (1.0 - penalty)


# --- Dist-N --------------------------------------------------------------------

def dist_n(questions: Sequence[str], n: int) -> float:
    """Distinct n-grams over total n-grams, pooled across the question set.

    N-grams never cross question boundaries, which keeps the duplication law
    dist_n(Q ++ Q) == dist_n(Q) / 2 exact.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    distinct: set[tuple[str, ...]] = set()
    total = 0
    for q in questions:
        toks = tokenize(q)
        for i in range(len(toks) - n + 1):
            distinct.add(tuple(toks[i : i + n]))
            total += 1
    if total == 0:
        raise MetricError(f"no {n}-grams present: need at least one question with >= {n} tokens")
    return len(distinct) / total


# --- Semantic (greedy token matching over an embedding backend) -----------------

def semantic_score(candidate: str, reference: str,
                   backend: EmbeddingBackend) -> tuple[float, float, float]:
    """Greedy max-cosine matching; returns (precision, recall, f). No IDF
    weighting, no baseline rescaling."""
    if not candidate.strip() or not reference.strip():
        return (0.0, 0.0, 0.0)
    cand = backend.embed_tokens(candidate)
    ref = backend.embed_tokens(reference)
    if not cand or not ref:
        return (0.0, 0.0, 0.0)

    def side(from_vecs, to_vecs) -> float:
        total = 0.0
        for e in from_vecs:
            total += max(cosine(e.vector, t.vector) for t in to_vecs)
        return total / len(from_vecs)

    p = side(cand, ref)
    r = side(ref, cand)
    f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return (p, r, f)


def semantic_recall(candidate: str, reference: str, backend: EmbeddingBackend) -> float:
    return semantic_score(candidate, reference, backend)[1]


# --- Set-level evaluation --------------------------------------------------------

@dataclass
class EvalReport:
    system: str
    n_questions_avg: float = 0.0
    rouge_l: float = 0.0
    meteor: float = 0.0
    semantic_f: float = 0.0
    dist1: float = 0.0
    dist2: float = 0.0
    n_documents: int = 0
    missing_generated: list[str] = field(default_factory=list)
    missing_reference: list[str] = field(default_factory=list)
    per_document: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "system": self.system,
            "# Q": self.n_questions_avg,
            "Rouge-L": self.rouge_l,
            "Meteor": self.meteor,
            "BertScore": self.semantic_f,
            "Dist-1": self.dist1,
            "Dist-2": self.dist2,
            "n_documents": self.n_documents,
            "missing_generated": self.missing_generated,
            "missing_reference": self.missing_reference,
            "per_document": self.per_document,
            "provenance": self.provenance,
        }


def _reference_questions(adoc: AnnotatedDocument) -> list[str]:
    return [q.completed_text or q.raw_text for q in sorted(adoc.questions, key=lambda q: q.position)]


def evaluate_question_sets(generated: Sequence, reference: Sequence[AnnotatedDocument],
                           backend: EmbeddingBackend, system: str = "system") -> EvalReport:
    """Score generated question sets against reference documents.

    Both sides' questions are concatenated per document in position order
    (newline-joined) before scoring; Dist-N pools all generated questions of
    the evaluated collection.
    """
    gen_by_id = {g.doc_id: g for g in generated}
    ref_by_id = {d.doc_id: d for d in reference}
    report = EvalReport(system=system)
    report.missing_generated = sorted(set(ref_by_id) - set(gen_by_id))
    report.missing_reference = sorted(set(gen_by_id) - set(ref_by_id))
    for doc_id in report.missing_generated:
        log.warning("doc %s present only in the reference; excluded", doc_id)
    for doc_id in report.missing_reference:
        log.warning("doc %s present only in the generated output; excluded", doc_id)

    all_generated_questions: list[str] = []
    rouge_sum = meteor_sum = f_sum = q_sum = 0.0
    evaluated = 0
    for doc_id in sorted(set(gen_by_id) & set(ref_by_id)):
        gen = gen_by_id[doc_id]
        gen_questions = [item.question for item in sorted(gen.items, key=lambda i: i.position)]
        ref_questions = _reference_questions(ref_by_id[doc_id])
        all_generated_questions.extend(gen_questions)
        cand = "\n".join(gen_questions)
        ref = "\n".join(ref_questions)
        if not gen_questions:
            log.warning("doc %s: empty generated question set", doc_id)
        rl = rouge_l(cand, ref)
        mt = meteor_lite(cand, ref)
        _, _, sf = semantic_score(cand, ref, backend)
        report.per_document.append({
            "doc_id": doc_id,
            "n_generated": len(gen_questions),
            "n_reference": len(ref_questions),
            "rouge_l": rl,
            "meteor": mt,
            "semantic_f": sf,
        })
        rouge_sum += rl
        meteor_sum += mt
        f_sum += sf
        q_sum += len(gen_questions)
        evaluated += 1

    report.n_documents = evaluated
    if evaluated:
        report.rouge_l = rouge_sum / evaluated
        report.meteor = meteor_sum / evaluated
        report.semantic_f = f_sum / evaluated
        report.n_questions_avg = q_sum / evaluated
    try:
        report.dist1 = dist_n(all_generated_questions, 1)
        report.dist2 = dist_n(all_generated_questions, 2)
    except MetricError as exc:
        log.warning("Dist-N unavailable: %s", exc)
    return report


# --- Position perplexity profile ---------------------------------------------------

@dataclass(frozen=True)
class PplProfile:
    """Mean word perplexity at offsets -3..+3 around an inserted question.

    Offset 0 is the question itself; missing context leaves None at an offset
    and sets the corresponding clipped flag.
    """

    values: Mapping[int, float | None]
    counts: Mapping[int, int]
    n_questions: int
    clipped_left: bool = False
    clipped_right: bool = False

    def to_json_dict(self) -> dict:
        return {
            "offsets": {str(k): self.values[k] for k in PPL_OFFSETS},
            "counts": {str(k): self.counts[k] for k in PPL_OFFSETS},
            "n_questions": self.n_questions,
            "clipped_left": self.clipped_left,
            "clipped_right": self.clipped_right,
        }


def _ppl_of(backend: ScoringBackend, context: str, continuation: str) -> float:
    scores = backend.score_tokens(context, continuation)
    mean_lp = sum(s.logprob for s in scores) / len(scores)
    return math.exp(-mean_lp)


def position_ppl_profile(doc: Document, question: str, position: int,
                         backend: ScoringBackend) -> PplProfile:
    """Insert `question` after sentence `position` and profile perplexity.

    The augmented sequence is the document with the question spliced in;
    every scored element is conditioned on its previous three elements of
    that sequence.
    """
    if not 1 <= position <= doc.n:
        raise ValueError(f"position {position} outside 1..{doc.n}")
    augmented = list(doc.sentences[:position]) + [question] + list(doc.sentences[position:])
    q_at = position  # 0-based index of the question in `augmented`

    values: dict[int, float | None] = {}
    counts: dict[int, int] = {}
    for off in PPL_OFFSETS:
        idx = q_at + off
        if 0 <= idx < len(augmented):
            context = " ".join(augmented[max(0, idx - 3) : idx])
            values[off] = _ppl_of(backend, context, augmented[idx])
            counts[off] = 1
        else:
            values[off] = None
            counts[off] = 0
    clipped_left = values[-3] is None or position < 3
    clipped_right = values[3] is None
    if clipped_left:
        log.warning("doc %s: fewer than 3 sentences of left context at position %d",
                    doc.doc_id, position)
    return PplProfile(values=values, counts=counts, n_questions=1,
                      clipped_left=clipped_left, clipped_right=clipped_right)


def aggregate_ppl_profiles(profiles: Sequence[PplProfile]) -> PplProfile:
    """Arithmetic mean per offset over every profile that has that offset."""
    sums = {off: 0.0 for off in PPL_OFFSETS}
    counts = {off: 0 for off in PPL_OFFSETS}
    for p in profiles:
        for off in PPL_OFFSETS:
            v = p.values[off]
            if v is not None:
                sums[off] += v * p.counts[off]
                counts[off] += p.counts[off]
    values = {off: (sums[off] / counts[off] if counts[off] else None) for off in PPL_OFFSETS}
    return PplProfile(
        values=values,
        counts=counts,
        n_questions=sum(p.n_questions for p in profiles),
        clipped_left=any(p.clipped_left for p in profiles),
        clipped_right=any(p.clipped_right for p in profiles),
    )


# --- Entailment score -----------------------------------------------------------

def ent_score(pairs: Sequence[tuple[str, Sequence[str]]], backend: EmbeddingBackend) -> float:
    """Mean over summaries of the mean semantic recall of its document's answers.

    Each pair is (summary, answers of the source document's questions);
    NO ANSWER entries are excluded. Summaries whose document has no answered
    question are skipped with a warning.
    """
    per_summary: list[float] = []
    for summary, answers in pairs:
        usable = [a for a in answers if a and a != NO_ANSWER]
        if not usable:
            log.warning("summary skipped: source document has no answered questions")
            continue
        recalls = [semantic_recall(summary, a, backend) for a in usable]
        per_summary.append(math.fsum(recalls) / len(recalls))
    if not per_summary:
        raise MetricError("no summary had answered questions to score against")
    # fsum keeps the result exactly invariant to summary/question order
    return math.fsum(per_summary) / len(per_summary)


# --- LLM summary judge -------------------------------------------------------------

def judge_summaries(doc: Document, summaries: Sequence[str], metric: str,
                    backend: GenerationBackend,
                    template_dir: str | Path | None = None,
                    temperature: float = DEFAULT_JUDGE_TEMPERATURE) -> tuple[list[float], list[str]]:
    """Batch-judge exactly three summaries on one quality metric (1-5 scale)."""
    if len(summaries) != 3:
        raise ValueError("judge_summaries expects exactly three summaries")
    if metric not in JUDGE_METRICS:
        raise ValueError(f"metric must be one of {sorted(JUDGE_METRICS)}")
    template = load_template("summary_judge", template_dir)
    prompt = render(template, scalars={
        "title": doc.title,
        "metric": metric,
        "metric description": JUDGE_METRICS[metric],
        "article": doc.text(),
        "summary_1": summaries[0],
        "summary_2": summaries[1],
        "summary_3": summaries[2],
    })
    raw = backend.generate_text(GenerationRequest(prompt=prompt, temperature=temperature))

    analyses = re.findall(r"Analysis of summary (\d+):\s*(.*)", raw)
    if len(analyses) != 3:
        raise JudgeParseError(f"expected 3 analysis blocks, found {len(analyses)}", raw)
    score_matches = re.findall(r"Score for summary (\d+):\s*([0-9.]+)", raw)
    if len(score_matches) != 3:
        raise JudgeParseError(f"expected 3 score lines, found {len(score_matches)}", raw)
    scores = [0.0, 0.0, 0.0]
    for num, value in score_matches:
        try:
            s = float(value.rstrip("."))
        except ValueError:
            raise JudgeParseError(f"unparseable score {value!r}", raw)
        if not 1.0 <= s <= 5.0:
            raise JudgeParseError(f"score {s} outside [1, 5]", raw)
        scores[int(num) - 1] = s
    return scores, [a for _, a in sorted(analyses, key=lambda x: int(x[0]))]
