from __future__ import annotations

import pytest

from gqkit.corpus import (
    NO_ANSWER,
    AnnotatedDocument,
    Document,
    GuidingQuestion,
    QuestionRole,
)


def make_doc(sentences, doc_id="doc-1", domain="Textbook", title="A Fixture Title"):
    return Document(doc_id=doc_id, domain=domain, title=title, sentences=tuple(sentences))


def make_question(qid, position, text="What is discussed here?", role=None,
                  answer=NO_ANSWER, keywords=(), evidence=(), conf_a=3, conf_r=3):
    if role is None:
        role = QuestionRole.AROUSE_INTEREST if position == 0 else QuestionRole.PROVOKE_THOUGHT
    return GuidingQuestion(
        qid=qid, raw_text=text, completed_text=text, position=position, role=role,
        answer=answer, answer_keywords=tuple(keywords), evidence_indices=tuple(evidence),
        confidence_answer=conf_a, confidence_role=conf_r,
    )


@pytest.fixture
def telecom_doc():
    return make_doc([
        "The term telecommuting emerged in the 1970s to describe remote work.",
        "Many companies adopted flexible schedules for their employees.",
        "Critics argue that remote work reduces collaboration.",
        "Telecommuting can cut commuting costs and travel time.",
        "The office remains central to corporate culture.",
    ], doc_id="telecom")


@pytest.fixture
def cell_doc():
    return make_doc([
        "The mitochondria produce energy inside the cell.",
        "Cells use energy for growth and repair.",
        "The nucleus stores genetic material.",
        "Energy flows through every living system.",
    ], doc_id="cell")


def make_annotated(doc=None, questions=()):
    if doc is None:
        doc = make_doc([f"Sentence number {i} talks about topic {i}." for i in range(1, 9)])
    qs = tuple(sorted(questions, key=lambda q: q.position))
    return AnnotatedDocument(document=doc, questions=qs)
