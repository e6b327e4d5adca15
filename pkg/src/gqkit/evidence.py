"""Supporting-sentence extraction: greedy search for the sentence subset whose
concatenation maximizes a Rouge objective against the answer, plus an
exhaustive reference implementation used as the test oracle.

The objective is the mean of Rouge-1 F1 and Rouge-2 F1 (the extractive-oracle
convention); switch to Rouge-L F via ``objective="rouge_l"``.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

from .corpus import NO_ANSWER, Document
from .metrics import rouge_l
from .textutil import tokenize

BRUTE_FORCE_MAX_SENTENCES = 12


@dataclass(frozen=True)
class EvidenceResult:
    indices: tuple[int, ...]          # sorted 1-based sentence indices
    score: float                      # final objective value
    trace: tuple[tuple[int, float], ...]  # greedy additions: (index, score after)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _rouge_n_f(candidate_tokens: list[str], reference_tokens: list[str], n: int) -> float:
    cand = _ngram_counts(candidate_tokens, n)
    ref = _ngram_counts(reference_tokens, n)
    overlap = sum(min(c, ref[g]) for g, c in cand.items())
    total_c = sum(cand.values())
    total_r = sum(ref.values())
    if overlap == 0 or total_c == 0 or total_r == 0:
        return 0.0
    p = overlap / total_c
    r = overlap / total_r
    return 2.0 * p * r / (p + r)


def _objective_fn(answer: str, doc: Document, objective: str):
    answer_tokens = tokenize(answer)
    sent_tokens = {i: tokenize(doc.sentence(i)) for i in range(1, doc.n + 1)}

    if objective == "rouge_1_2":
        def score(indices: tuple[int, ...]) -> float:
            if not indices:
                return 0.0
            cand: list[str] = []
            for i in sorted(indices):
                cand.extend(sent_tokens[i])
            return 0.5 * (_rouge_n_f(cand, answer_tokens, 1) + _rouge_n_f(cand, answer_tokens, 2))
    elif objective == "rouge_l":
        def score(indices: tuple[int, ...]) -> float:
            if not indices:
                return 0.0
            text = " ".join(doc.sentence(i) for i in sorted(indices))
            return rouge_l(text, answer)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return score


def extract_evidence(answer: str, doc: Document, max_sentences: int = 5,
                     objective: str = "rouge_1_2") -> EvidenceResult:
    """Greedily grow the evidence set while the objective strictly increases.

    Ties between candidate sentences go to the lower index. Questions labeled
    NO ANSWER must not reach this function; callers emit "NO EVIDENCE" instead.
    """
    if answer == NO_ANSWER:
        raise ValueError("extract_evidence called with a NO ANSWER question")
    if doc.n < 1:
        raise ValueError("document has no sentences")
    score_of = _objective_fn(answer, doc, objective)

    selected: list[int] = []
    best = 0.0
    trace: list[tuple[int, float]] = []
    while len(selected) < max_sentences:
        step_best, step_idx = best, None
        for i in range(1, doc.n + 1):
            if i in selected:
                continue
            s = score_of(tuple(selected + [i]))
            if s > step_best:
                step_best, step_idx = s, i
        if step_idx is None:
            break
        selected.append(step_idx)
        best = step_best
        trace.append((step_idx, step_best))
    return EvidenceResult(indices=tuple(sorted(selected)), score=best, trace=tuple(trace))


def brute_force_evidence(answer: str, doc: Document, max_sentences: int = 5,
                         objective: str = "rouge_1_2") -> EvidenceResult:
    """Exhaustive oracle over all subsets of size <= max_sentences.

    Guarded to small documents; ties resolved to the lexicographically
    smallest sorted index tuple. The trace is empty (no greedy path exists).
    """
    if answer == NO_ANSWER:
        raise ValueError("brute_force_evidence called with a NO ANSWER question")
    if doc.n > BRUTE_FORCE_MAX_SENTENCES:
        raise ValueError(
            f"brute force guarded to n <= {BRUTE_FORCE_MAX_SENTENCES} sentences, got {doc.n}"
        )
    score_of = _objective_fn(answer, doc, objective)

    best_set: tuple[int, ...] = ()
    best_score = 0.0
    for size in range(1, min(max_sentences, doc.n) + 1):
        for combo in itertools.combinations(range(1, doc.n + 1), size):
            s = score_of(combo)
            if s > best_score or (s == best_score and best_set and combo < best_set):
                best_set, best_score = combo, s
    return EvidenceResult(indices=best_set, score=best_score, trace=())
