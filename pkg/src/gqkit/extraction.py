"""Deterministic question mining from raw text.

Sentence segmentation is rule-based on purpose: it is the only preprocessing
step that also runs on the reference side of every metric, so it must be
reproducible with zero model dependencies. The rules: a sentence ends at a
token whose core ends with terminal punctuation, unless the token is on the
abbreviation allowlist or we are inside an open parenthesis/double quote;
a '.' additionally requires the next token to look like a sentence start.
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .bm25 import BM25
from .corpus import Document
from .textutil import normalize_ws

_CLOSERS = "\"')]}”’"
_OPENER_START = "\"'(“‘["


@dataclass(frozen=True)
class RawArticle:
    doc_id: str
    domain: str
    title: str
    body_text: str

    def __post_init__(self):
        if not self.body_text:
            raise ValueError(f"article {self.doc_id!r}: body_text must be non-empty")


@dataclass(frozen=True)
class ExtractedQuestion:
    text: str
    sentence_index: int  # 0 = title


def default_abbreviations() -> frozenset[str]:
    data = importlib.resources.files("gqkit").joinpath("data/abbreviations.txt")
    return frozenset(_parse_abbrev_lines(data.read_text(encoding="utf-8").splitlines()))


def load_abbreviations(path: str | Path) -> frozenset[str]:
    """One token per line; '#' comments and blank lines ignored."""
    return frozenset(_parse_abbrev_lines(Path(path).read_text(encoding="utf-8").splitlines()))


def _parse_abbrev_lines(lines: Iterable[str]) -> list[str]:
    out = []
    for line in lines:
        tok = line.strip().lower()
        if tok and not tok.startswith("#"):
            if not tok.endswith("."):
                tok += "."
            out.append(tok)
    return out


def _starts_sentence(token: str) -> bool:
    ch = token[0]
    return ch.isupper() or ch.isdigit() or ch in _OPENER_START


def segment_sentences(text: str, abbreviations: frozenset[str] | None = None) -> list[str]:
    """Split text into sentences over its whitespace-normalized token stream.

    Guarantee: ``" ".join(segment_sentences(t)) == " ".join(t.split())`` for
    every input; terminal punctuation stays attached to its sentence.
    """
    if abbreviations is None:
        abbreviations = default_abbreviations()
    tokens = text.split()
    if not tokens:
        return []

    sentences: list[str] = []
    current: list[str] = []
    paren_depth = 0
    in_quote = False
    for i, tok in enumerate(tokens):
        current.append(tok)
        for ch in tok:
            if ch in "([{":
                paren_depth += 1
            elif ch in ")]}":
                paren_depth = max(0, paren_depth - 1)
            elif ch == '"':
                in_quote = not in_quote

        if i + 1 == len(tokens):
            break
        core = tok.rstrip(_CLOSERS)
        boundary = False
        if core.endswith(("?", "!")):
            boundary = True
        elif core.endswith("."):
            if core.lower() not in abbreviations and _starts_sentence(tokens[i + 1]):
                boundary = True
        if boundary and paren_depth == 0 and not in_quote:
            sentences.append(" ".join(current))
            current = []
    if current:
        sentences.append(" ".join(current))
    return sentences


def extract_questions(
    article: RawArticle, abbreviations: frozenset[str] | None = None
) -> tuple[Document, list[ExtractedQuestion]]:
    """Segment an article and mine every '?'-terminated sentence.

    The title contributes a question at index 0 when it ends with '?'.
    """
    sentences = segment_sentences(article.body_text, abbreviations)
    doc = Document(
        doc_id=article.doc_id,
        domain=article.domain,
        title=article.title,
        sentences=tuple(sentences),
    )
    questions: list[ExtractedQuestion] = []
    if article.title.strip().endswith("?"):
        questions.append(ExtractedQuestion(text=article.title.strip(), sentence_index=0))
    for idx, sent in enumerate(sentences, start=1):
        if sent.rstrip(_CLOSERS).endswith("?"):
            questions.append(ExtractedQuestion(text=sent, sentence_index=idx))
    return doc, questions


def filter_corpus(
    articles: Sequence[RawArticle],
    min_questions: int = 3,
    abbreviations: frozenset[str] | None = None,
) -> list[RawArticle]:
    """Keep articles whose writers actively used questions (>= min_questions)."""
    if min_questions < 1:
        raise ValueError("min_questions must be >= 1")
    kept = []
    for art in articles:
        _, qs = extract_questions(art, abbreviations)
        if len(qs) >= min_questions:
            kept.append(art)
    return kept


def relocate_anchor(anchor_text: str, doc: Document, k1: float = 1.5, b: float = 0.75) -> int:
    """Resolve a copied anchor sentence back to a 1-based sentence index.

    Exact match (whitespace-normalized) wins and takes the lowest index;
    otherwise the BM25-most-similar sentence over the document's sentences
    as the collection. Ties go to the lower index.
    """
    if not anchor_text.strip():
        raise ValueError("anchor_text must be non-empty")
    if doc.n < 1:
        raise ValueError("document has no sentences")
    needle = normalize_ws(anchor_text)
    for idx, sent in enumerate(doc.sentences, start=1):
        if normalize_ws(sent) == needle:
            return idx
    return BM25(list(doc.sentences), k1=k1, b=b).best(anchor_text) + 1
