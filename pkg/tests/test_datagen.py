from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_annotated, make_doc, make_question
from gqkit.corpus import NO_ANSWER, QuestionRole
from gqkit.datagen import (
    JointEntry,
    JointParseError,
    Task,
    extract_answer_keywords,
    flatten_joint,
    kept_span,
    load_training_examples,
    make_training_examples,
    parse_joint,
    prepare_document,
    save_training_examples,
    select_noise_indices,
    truncate_context,
)
from gqkit.stubs import AnnotationStub


def _doc_with_questions(n=8, positions=(3, 6), doc_id="dg"):
    sentences = []
    for i in range(1, n + 1):
        if i in positions:
            sentences.append(f"Is item {i} the key to topic {i}?")
        else:
            sentences.append(f"Item {i} explains topic {i} in detail.")
    doc = make_doc(sentences, doc_id=doc_id)
    questions = [
        make_question(f"q{p}", p, text=doc.sentence(p),
                      role=QuestionRole.ORGANIZE_DISCOURSE,
                      answer=f"Topic {p} answer.",
                      keywords=(f"topic{p}", "detail"))
        for p in positions
    ]
    return make_annotated(doc, questions)


# --- noise selection -----------------------------------------------------------

def test_noise_count_is_ceiling():
    rng = random.Random(0)
    picked = select_noise_indices(50, [], 0.01, rng)
    assert len(picked) == 1


def test_noise_respects_exclusion_zone(caplog):
    rng = random.Random(0)
    # every sentence is within distance 10 of the question at index 5
    picked = select_noise_indices(12, [5], 0.1, rng)
    assert picked == []


def test_noise_is_seed_deterministic():
    a = select_noise_indices(200, [50, 100], 0.02, random.Random(42))
    b = select_noise_indices(200, [50, 100], 0.02, random.Random(42))
    assert a == b
    for idx in a:
        assert all(abs(idx - q) >= 10 for q in (50, 100))
    assert len(a) == 4


# --- prepare_document ------------------------------------------------------------

def test_prepare_removes_questions_and_maps_indices():
    adoc = _doc_with_questions()
    smoothed = prepare_document(adoc, AnnotationStub(), noise_rate=0.0, seed=1)
    for q in adoc.questions:
        assert adoc.document.sentence(q.position) not in smoothed.sentences
        assert smoothed.index_map[q.position] is None
    assert smoothed.index_map[2] == 2
    assert smoothed.index_map[4] == 3
    assert smoothed.anchor_for(3) == 2
    assert smoothed.anchor_for(6) == 4
    retained = [smoothed.index_map[i] for i in range(1, 9) if smoothed.index_map[i] is not None]
    assert retained == sorted(retained)


def test_prepare_zero_questions_takes_one_noise_removal():
    doc = make_doc([f"Filler sentence number {i} stands alone." for i in range(1, 51)],
                   doc_id="noq")
    adoc = make_annotated(doc, [])
    smoothed = prepare_document(adoc, AnnotationStub(), noise_rate=0.01, seed=3)
    assert len(smoothed.noise_indices) == 1
    assert len(smoothed.sentences) == 49


def test_prepare_is_byte_stable():
    adoc = _doc_with_questions()
    one = prepare_document(adoc, AnnotationStub(), noise_rate=0.01, seed=9)
    two = prepare_document(adoc, AnnotationStub(), noise_rate=0.01, seed=9)
    assert one == two


def test_prepare_noise_never_near_questions():
    rng = random.Random(5)
    for trial in range(5):
        n = 40
        positions = tuple(sorted(rng.sample(range(1, n + 1), 2)))
        sentences = [
            f"Is this point {i} under discussion?" if i in positions
            else f"Point {i} covers material {i}."
            for i in range(1, n + 1)
        ]
        doc = make_doc(sentences, doc_id=f"nd{trial}")
        adoc = make_annotated(doc, [
            make_question(f"q{p}", p, text=doc.sentence(p),
                          role=QuestionRole.FRAME_PURPOSE) for p in positions
        ])
        smoothed = prepare_document(adoc, AnnotationStub(), noise_rate=0.05, seed=trial)
        for noise_idx in smoothed.noise_indices:
            assert all(abs(noise_idx - p) >= 10 for p in positions)


# --- keywords ----------------------------------------------------------------------

def test_keywords_ranked_by_tfidf(cell_doc):
    # hand TF-IDF over the 4-sentence fixture: tf=1 each; df(mitochondria)=1,
    # df(produce)=1, df(energy)=3 -> idf ln(4)=1.3863 twice, ln(4/3)=0.2877
    kws = extract_answer_keywords(["The mitochondria produce energy."], cell_doc)
    assert kws == ["mitochondria", "produce", "energy"]


def test_keywords_k_one(cell_doc):
    assert extract_answer_keywords(["The mitochondria produce energy."], cell_doc, k=1) == \
        ["mitochondria"]


def test_keywords_all_stopwords_warns(cell_doc, caplog):
    assert extract_answer_keywords(["The of and."], cell_doc) == []


def test_keywords_preserve_casing(cell_doc):
    kws = extract_answer_keywords(["Energy flows through every living system."], cell_doc)
    assert "Energy" in kws


# --- training example builders ---------------------------------------------------------

def _smoothed(adoc):
    return prepare_document(adoc, AnnotationStub(), noise_rate=0.0, seed=0)


def test_pp_target_joins_anchor_sentences():
    adoc = _doc_with_questions()
    smoothed = _smoothed(adoc)
    examples = make_training_examples(smoothed, adoc.questions, "PP")
    assert len(examples) == 1
    ex = examples[0]
    assert ex.task is Task.PP and ex.qid == "ALL"
    s2, s5 = adoc.document.sentence(2), adoc.document.sentence(5)
    assert ex.target_text == f"{s2} | {s5}"
    assert ex.target_text.count(" | ") == len(adoc.questions) - 1


def test_ae_input_has_exactly_one_marker():
    adoc = _doc_with_questions()
    examples = make_training_examples(_smoothed(adoc), adoc.questions, "AE")
    assert len(examples) == 2
    for ex in examples:
        assert ex.input_text.count("[Question]") == 1
        assert ex.target_text == "topic" + ex.qid[1:] + ", detail"


def test_qg_input_carries_answer_suffix():
    adoc = _doc_with_questions()
    examples = make_training_examples(_smoothed(adoc), adoc.questions, "QG")
    for ex in examples:
        assert " Answer: " in ex.input_text
        assert ex.target_text.endswith("?")


def test_multitask_union_counts():
    adoc = _doc_with_questions()
    examples = make_training_examples(_smoothed(adoc), adoc.questions, "Multitask")
    assert len(examples) == 5  # 1 PP + 2 AE + 2 QG
    prefixes = {ex.input_text.split(":")[0] for ex in examples}
    assert prefixes == {"predict positions", "extract answer", "generate question"}


def test_joint_examples_roundtrip_through_parser():
    adoc = _doc_with_questions()
    for paradigm, with_roles in (("Joint", False), ("JointR", True)):
        [ex] = make_training_examples(_smoothed(adoc), adoc.questions, paradigm)
        entries = parse_joint(ex.target_text, with_roles=with_roles)
        assert [e.question for e in entries] == [q.completed_text for q in adoc.questions]
        if with_roles:
            assert all(e.role is QuestionRole.ORGANIZE_DISCOURSE for e in entries)


def test_title_questions_excluded_by_default():
    doc = make_doc([f"Body sentence {i} explains more." for i in range(1, 4)], doc_id="t")
    title_q = make_question("qt", 0, text="A title question?")
    adoc = make_annotated(doc, [title_q])
    smoothed = _smoothed(adoc)
    assert make_training_examples(smoothed, adoc.questions, "PP") == []
    [ex] = make_training_examples(smoothed, adoc.questions, "PP",
                                  title=doc.title, include_title=True)
    assert ex.target_text == doc.title


# --- joint flatten/parse -----------------------------------------------------------------

def test_flatten_matches_template():
    entry = JointEntry(
        anchor_sentence="Telecommuting grew.",
        answer_keywords=("flexibility", "costs"),
        question="What are the drawbacks of telecommuting?",
    )
    assert flatten_joint([entry], with_roles=False) == (
        "Position: Telecommuting grew. # Answer: flexibility, costs # "
        "Question: What are the drawbacks of telecommuting?"
    )


def test_flatten_with_roles_inserts_role_field():
    entry = JointEntry(
        anchor_sentence="Telecommuting grew.",
        answer_keywords=("flexibility",),
        question="What changed?",
        role=QuestionRole.ORGANIZE_DISCOURSE,
    )
    text = flatten_joint([entry], with_roles=True)
    assert " # Role: OrganizeDiscourse # Answer: " in text
    assert text.index("Position:") < text.index("Role:") < text.index("Answer:")


def test_flatten_two_entries_single_separator():
    entries = [
        JointEntry("Anchor one.", ("a",), "Why one?"),
        JointEntry("Anchor two.", ("b",), "Why two?"),
    ]
    text = flatten_joint(entries, with_roles=False)
    assert text.count(" | ") == 1


def test_parse_missing_field_reports_record():
    with pytest.raises(JointParseError) as err:
        parse_joint("Position: A. # Question: B?", with_roles=False)
    assert err.value.record_index == 0


def test_parse_trailing_separator_ignored():
    text = "Position: A. # Answer: x # Question: B? | "
    entries = parse_joint(text, with_roles=False)
    assert len(entries) == 1


def test_parse_unknown_role_rejected():
    text = "Position: A. # Role: Rhetorical # Answer: x # Question: B?"
    with pytest.raises(JointParseError):
        parse_joint(text, with_roles=True)


def test_parse_tolerant_mode_skips_bad_records():
    text = ("Position: A. # Answer: x # Question: B? | garbage record | "
            "Position: C. # Answer: y # Question: D?")
    strictly = pytest.raises(JointParseError)
    with strictly:
        parse_joint(text, with_roles=False, strict=True)
    entries = parse_joint(text, with_roles=False, strict=False)
    assert [e.anchor_sentence for e in entries] == ["A.", "C."]
    with pytest.raises(JointParseError):
        parse_joint("junk | junk", with_roles=False, strict=False)


_payload = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=126),
    min_size=1, max_size=40,
).map(str.strip).filter(bool)
_keyword = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=8)


@st.composite
def joint_entries(draw, with_roles: bool):
    n = draw(st.integers(min_value=1, max_value=4))
    out = []
    for _ in range(n):
        question = draw(_payload).rstrip("?").strip() + "?"
        out.append(JointEntry(
            anchor_sentence=draw(_payload),
            answer_keywords=tuple(draw(st.lists(_keyword, max_size=3))),
            question=question,
            role=draw(st.sampled_from(list(QuestionRole))) if with_roles else None,
        ))
    return out


@settings(max_examples=100, deadline=None)
@given(st.booleans().flatmap(lambda wr: st.tuples(st.just(wr), joint_entries(wr))))
def test_joint_roundtrip_property(case):
    with_roles, entries = case
    assert parse_joint(flatten_joint(entries, with_roles), with_roles) == entries


def test_joint_roundtrip_with_delimiters_in_payloads():
    for with_roles in (False, True):
        entries = [JointEntry(
            anchor_sentence="Costs fell | see ledger #4 \\ appendix.",
            answer_keywords=("ledger", "costs"),
            question="What does entry # 4 | row 2 show?",
            role=QuestionRole.ESTABLISH_CLAIM if with_roles else None,
        )]
        assert parse_joint(flatten_joint(entries, with_roles), with_roles) == entries


# --- truncation -------------------------------------------------------------------------

def test_kept_span_formula():
    assert kept_span(100, 10, 50) == (5, 55)
    assert kept_span(100, 2, 90) == (0, 95)
    assert kept_span(20, 18, 18) == (13, 20)


def test_truncate_keeps_span():
    doc = make_doc([f"Sentence {i} marks spot number {i}." for i in range(1, 101)],
                   doc_id="span")
    [seg] = truncate_context(doc, 10, 50, max_len=10_000)
    assert (seg.start, seg.end) == (5, 55)
    assert len(seg.sentences) == 51


def test_truncate_clamps_lower_bound():
    doc = make_doc([f"Sentence {i} marks spot number {i}." for i in range(1, 21)],
                   doc_id="clamp")
    [seg] = truncate_context(doc, 2, 4, max_len=10_000)
    assert seg.start == 1


def test_truncate_splits_into_equal_segments():
    doc = make_doc([" ".join(f"w{i}x{j}" for j in range(10)) + "." for i in range(1, 31)],
                   doc_id="split")
    segs = truncate_context(doc, 1, 30, max_len=160)
    assert len(segs) == 2
    assert [len(s.sentences) for s in segs] == [15, 15]
    assert all(sum(len(x.split()) for x in s.sentences) < 160 for s in segs)


def test_truncate_avoids_anchor_neighborhood():
    doc = make_doc([" ".join(f"w{i}x{j}" for j in range(10)) + "." for i in range(1, 31)],
                   doc_id="anchored")
    segs = truncate_context(doc, 1, 30, max_len=200, anchors=[15])
    assert len(segs) >= 2
    for a, b in zip(segs, segs[1:]):
        boundary_left, boundary_right = a.end, b.start
        assert abs(boundary_left - 15) >= 3 and abs(boundary_right - 15) >= 3


def test_truncate_single_oversize_sentence_errors():
    doc = make_doc([" ".join(f"w{j}" for j in range(40)) + "."], doc_id="long")
    with pytest.raises(ValueError, match="single sentence"):
        truncate_context(doc, 1, 1, max_len=10)


# --- JSONL roundtrip -----------------------------------------------------------------------

def test_training_examples_jsonl_roundtrip(tmp_path):
    adoc = _doc_with_questions()
    examples = make_training_examples(_smoothed(adoc), adoc.questions, "Multitask")
    path = tmp_path / "train.jsonl"
    save_training_examples(examples, path)
    assert load_training_examples(path) == examples
