"""Distributional reports over an annotated corpus: per-domain statistics,
role distribution and diversity, position quintiles, and question-to-evidence
distance. Reports are deterministic and independent of document order.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import AnnotatedDocument, CorpusStats, QuestionRole

ROLE_ORDER = tuple(QuestionRole)


class AnalysisError(ValueError):
    pass


@dataclass
class AnalysisReport:
    corpus_stats: list[CorpusStats]
    role_distribution: dict[str, dict[str, float]]     # domain -> role -> proportion
    role_diversity: dict[str, dict[int, float]]        # domain -> k (1..5) -> proportion
    position_quintiles: dict[str, list[float]]         # role -> 5 proportions
    evidence_distance: dict[str, float]                # role -> mean distance
    provenance: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "corpus_stats": [vars(s) for s in self.corpus_stats],
            "role_distribution": self.role_distribution,
            "role_diversity": {d: {str(k): v for k, v in m.items()}
                               for d, m in self.role_diversity.items()},
            "position_quintiles": self.position_quintiles,
            "evidence_distance": self.evidence_distance,
            "provenance": self.provenance,
        }


def _word_count(text: str) -> int:
    return len(text.split())


def corpus_stats(dataset: Sequence[AnnotatedDocument]) -> list[CorpusStats]:
    """Per-domain document/question counts and word averages."""
    if not dataset:
        raise AnalysisError("dataset must be non-empty")
    by_domain: dict[str, list[AnnotatedDocument]] = {}
    for doc in dataset:
        by_domain.setdefault(doc.document.domain, []).append(doc)
    out = []
    for domain in sorted(by_domain):
        docs = by_domain[domain]
        n_docs = len(docs)
        doc_words = [sum(_word_count(s) for s in d.document.sentences) for d in docs]
        questions = [q for d in docs for q in d.questions]
        q_words = [_word_count(q.completed_text or q.raw_text) for q in questions]
        out.append(CorpusStats(
            domain=domain,
            n_documents=n_docs,
            avg_words_per_doc=sum(doc_words) / n_docs,
            n_questions=len(questions),
            avg_words_per_question=(sum(q_words) / len(q_words)) if q_words else 0.0,
            avg_questions_per_doc=len(questions) / n_docs,
        ))
    return out


def role_distribution(dataset: Sequence[AnnotatedDocument]) -> dict[str, dict[str, float]]:
    """Per domain, the proportion of questions in each role (sums to 1)."""
    counts: dict[str, dict[str, int]] = {}
    for doc in dataset:
        domain_counts = counts.setdefault(doc.document.domain, {})
        for q in doc.questions:
            domain_counts[q.role.value] = domain_counts.get(q.role.value, 0) + 1
    out = {}
    for domain in sorted(counts):
        total = sum(counts[domain].values())
        out[domain] = {
            role.value: counts[domain].get(role.value, 0) / total for role in ROLE_ORDER
        } if total else {}
    return out


def role_diversity(dataset: Sequence[AnnotatedDocument]) -> dict[str, dict[int, float]]:
    """Per domain, the proportion of documents using exactly k distinct roles."""
    counts: dict[str, dict[int, int]] = {}
    totals: dict[str, int] = {}
    for doc in dataset:
        if not doc.questions:
            continue
        domain = doc.document.domain
        k = len({q.role for q in doc.questions})
        counts.setdefault(domain, {})[k] = counts.setdefault(domain, {}).get(k, 0) + 1
        totals[domain] = totals.get(domain, 0) + 1
    return {
        domain: {k: counts[domain].get(k, 0) / totals[domain] for k in range(1, 6)}
        for domain in sorted(counts)
    }


def quintile_bin(position: int, n: int) -> int:
    """1-based quintile for a 1-based position in an n-sentence document."""
    if not 1 <= position <= n:
        raise AnalysisError(f"position {position} outside 1..{n}")
    return math.ceil(5 * position / n)


def position_quintiles(dataset: Sequence[AnnotatedDocument]) -> dict[str, list[float]]:
    """Per-role distribution over five equal document segments.

    Title questions are excluded: they sit outside the sentence index space.
    """
    counts: dict[str, list[int]] = {}
    for doc in dataset:
        n = doc.document.n
        for q in doc.questions:
            if q.role is QuestionRole.AROUSE_INTEREST or q.position == 0:
                continue
            bins = counts.setdefault(q.role.value, [0] * 5)
            bins[quintile_bin(q.position, n) - 1] += 1
    out = {}
    for role, bins in sorted(counts.items()):
        total = sum(bins)
        out[role] = [b / total for b in bins]
    return out


def evidence_distance(dataset: Sequence[AnnotatedDocument]) -> dict[str, float]:
    """Per-role mean distance (in sentences) to the farthest evidence sentence.

    Questions without evidence are excluded: they have nothing to measure.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for doc in dataset:
        for q in doc.questions:
            if not q.evidence_indices:
                continue
            dist = max(abs(e - q.position) for e in q.evidence_indices)
            sums[q.role.value] = sums.get(q.role.value, 0.0) + dist
            counts[q.role.value] = counts.get(q.role.value, 0) + 1
    return {role: sums[role] / counts[role] for role in sorted(sums)}


def build_report(dataset: Sequence[AnnotatedDocument], provenance: dict | None = None) -> AnalysisReport:
    return AnalysisReport(
        corpus_stats=corpus_stats(dataset),
        role_distribution=role_distribution(dataset),
        role_diversity=role_diversity(dataset),
        position_quintiles=position_quintiles(dataset),
        evidence_distance=evidence_distance(dataset),
        provenance=provenance or {},
    )


def write_report_csvs(report: AnalysisReport, out_dir: str | Path) -> list[Path]:
    """One CSV per analysis, laid out like the tables/figures they feed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def w(name: str, header: list[str], rows: list[list]) -> None:
        p = out_dir / name
        with p.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(p)

    w("corpus_stats.csv",
      ["domain", "n_documents", "avg_words_per_doc", "n_questions",
       "avg_words_per_question", "avg_questions_per_doc"],
      [[s.domain, s.n_documents, s.avg_words_per_doc, s.n_questions,
        s.avg_words_per_question, s.avg_questions_per_doc] for s in report.corpus_stats])

    w("role_distribution.csv",
      ["domain", *[r.value for r in ROLE_ORDER]],
      [[domain, *[dist.get(r.value, 0.0) for r in ROLE_ORDER]]
       for domain, dist in report.role_distribution.items()])

    w("role_diversity.csv",
      ["domain", "1", "2", "3", "4", "5"],
      [[domain, *[dist[k] for k in range(1, 6)]]
       for domain, dist in report.role_diversity.items()])

    w("position_quintiles.csv",
      ["role", "q1", "q2", "q3", "q4", "q5"],
      [[role, *bins] for role, bins in report.position_quintiles.items()])

    w("evidence_distance.csv",
      ["role", "mean_distance"],
      [[role, d] for role, d in report.evidence_distance.items()])
    return written


def save_report_json(report: AnalysisReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_json_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
