from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_doc
from gqkit.bm25 import BM25
from gqkit.extraction import (
    RawArticle,
    extract_questions,
    filter_corpus,
    relocate_anchor,
    segment_sentences,
)

FIXTURE = Path(__file__).parent / "fixtures" / "segmented_sentences.json"


def test_segment_delimiters():
    assert segment_sentences("A cat. Why? Because.") == ["A cat.", "Why?", "Because."]


def test_segment_abbreviation():
    assert segment_sentences("See Fig. 3. Done.") == ["See Fig. 3.", "Done."]


def test_segment_empty():
    assert segment_sentences("") == []


def test_segment_hand_segmented_fixture():
    sentences = json.loads(FIXTURE.read_text(encoding="utf-8"))
    assert len(sentences) == 50
    assert segment_sentences(" ".join(sentences)) == sentences


def test_segment_no_split_inside_parens_or_quotes():
    text = 'He said "Stop. Now." and left. The end.'
    assert segment_sentences(text) == ['He said "Stop. Now." and left.', "The end."]


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=200))
def test_segment_reconstruction_property(text):
    sentences = segment_sentences(text)
    assert " ".join(sentences) == " ".join(text.split())


def _article(body, doc_id="a1", title="A plain title"):
    return RawArticle(doc_id=doc_id, domain="Textbook", title=title, body_text=body)


def test_extract_simple_question():
    doc, qs = extract_questions(_article("A. B? C."))
    assert doc.sentences == ("A.", "B?", "C.")
    assert [(q.text, q.sentence_index) for q in qs] == [("B?", 2)]


def test_extract_title_question_gets_index_zero():
    art = _article("Ants recruit nestmates. They also dissuade them.",
                   title="Why do ants recruit in both directions?")
    _, qs = extract_questions(art)
    assert qs[0].sentence_index == 0
    assert qs[0].text.endswith("?")


def test_extract_no_questions():
    _, qs = extract_questions(_article("One. Two. Three."))
    assert qs == []


def test_extract_every_question_exactly_once():
    body = "Alpha? Beta. Gamma? Delta? Epsilon."
    doc, qs = extract_questions(_article(body))
    question_sentences = [(s, i) for i, s in enumerate(doc.sentences, start=1)
                          if s.endswith("?")]
    assert [(q.text, q.sentence_index) for q in qs] == question_sentences


def test_filter_boundaries():
    two = _article("One? Two? Three.", doc_id="two")
    three = _article("One? Two? Three?", doc_id="three")
    kept = filter_corpus([two, three], min_questions=3)
    assert [a.doc_id for a in kept] == ["three"]
    assert filter_corpus([], min_questions=3) == []


def test_filter_counts_title_question():
    art = _article("One? Two?", title="A title question?")
    assert filter_corpus([art], min_questions=3) == [art]


def test_filter_idempotent():
    arts = [
        _article("A? B? C?", doc_id="x"),
        _article("A? B.", doc_id="y"),
        _article("A? B? C? D?", doc_id="z"),
    ]
    once = filter_corpus(arts, 2)
    assert filter_corpus(once, 2) == once


def test_relocate_exact_match(telecom_doc):
    assert relocate_anchor(telecom_doc.sentence(4), telecom_doc) == 4


def test_relocate_exact_match_ignores_whitespace(telecom_doc):
    anchor = "  " + telecom_doc.sentence(2).replace(" ", "   ") + " "
    assert relocate_anchor(anchor, telecom_doc) == 2


def test_relocate_bm25_fallback(telecom_doc):
    # Hand-computed BM25 (k1=1.5, b=0.75, idf=ln(1+(N-df+.5)/(df+.5))) over the
    # 5-sentence fixture ranks sentence 1 highest at 4.2891409959.
    anchor = "telecommuting emerged in the seventies"
    assert relocate_anchor(anchor, telecom_doc) == 1
    bm = BM25(list(telecom_doc.sentences))
    assert bm.score(anchor, 0) == pytest.approx(4.2891409959, abs=1e-9)


def test_relocate_tie_picks_lower_index():
    doc = make_doc(["The same sentence here.", "Other words.", "The same sentence here."])
    assert relocate_anchor("The same sentence here.", doc) == 1
    # BM25 tie on duplicates without exact match (case differs)
    assert relocate_anchor("same sentence", doc) == 1


def test_relocate_rejects_empty_anchor(telecom_doc):
    with pytest.raises(ValueError):
        relocate_anchor("   ", telecom_doc)


def test_relocate_identity_on_fixture_docs(telecom_doc, cell_doc):
    for doc in (telecom_doc, cell_doc):
        for i in range(1, doc.n + 1):
            assert relocate_anchor(doc.sentence(i), doc) == i


def test_raw_article_rejects_empty_body():
    with pytest.raises(ValueError):
        RawArticle(doc_id="x", domain="Textbook", title="t", body_text="")
