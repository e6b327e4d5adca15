from __future__ import annotations

import pytest

from conftest import make_doc
from gqkit.corpus import QuestionRole
from gqkit.datagen import flatten_joint, parse_joint
from gqkit.generation import (
    GeneratedItem,
    GeneratedQuestionSet,
    GenerationError,
    control_question_count,
    load_question_sets,
    run_finetuned,
    run_zero_shot,
    save_question_sets,
)
from gqkit.stubs import AnnotationStub, CannedStub, FinetunedStub


@pytest.fixture
def article_doc():
    return make_doc([
        "Volcanoes shape the land around them.",
        "Lava flows harden into new rock layers.",
        "Ash clouds travel for hundreds of miles.",
        "Farmers value the mineral-rich soil afterwards.",
        "Monitoring stations watch for early warning signs.",
        "Evacuation plans save lives when eruptions strike.",
    ], doc_id="volcano")


def test_run_finetuned_joint_with_stub(article_doc):
    qset = run_finetuned(article_doc, "JointR", FinetunedStub("JointR"))
    assert qset.paradigm == "JointR"
    assert len(qset.items) == 2
    for item in qset.items:
        assert 1 <= item.position <= article_doc.n
        assert item.question.endswith("?")
        assert item.role is not None
    # anchors were copied verbatim, so relocation is exact
    assert [it.position for it in qset.items] == [1, 4]


def test_run_finetuned_joint_output_is_losslessly_parseable(article_doc):
    stub = FinetunedStub("Joint")
    qset = run_finetuned(article_doc, "Joint", stub)
    raw = qset.raw_outputs[0]
    assert flatten_joint(parse_joint(raw, with_roles=False), with_roles=False) == raw


def test_run_finetuned_pipeline_flow(article_doc):
    s2 = article_doc.sentence(2)
    s5 = article_doc.sentence(5)
    stub = CannedStub([
        f"{s2} | {s5}",      # position predictor pass
        "rock, layers",       # answer extraction at anchor 2
        "What do lava flows become?",   # question generation at anchor 2
        "warning, signs",     # answer extraction at anchor 5
        "What do stations watch for?",  # question generation at anchor 5
    ])
    qset = run_finetuned(article_doc, "Pipeline", stub, concurrency=1)
    assert [it.position for it in qset.items] == [2, 5]
    assert qset.items[0].answer_keywords == ("rock", "layers")
    assert len(stub.calls) == 5
    assert "[Question]" in stub.calls[1]
    assert stub.calls[2].endswith("Answer: rock, layers")


def test_run_finetuned_multitask_prefixes(article_doc):
    stub = FinetunedStub("Multitask")
    qset = run_finetuned(article_doc, "Multitask", stub, concurrency=1)
    assert stub.calls[0].startswith("predict positions: ")
    assert any(c.startswith("extract answer: ") for c in stub.calls)
    assert any(c.startswith("generate question: ") for c in stub.calls)
    assert qset.items


def test_run_finetuned_paraphrased_anchor_relocates_via_bm25(article_doc):
    paraphrase = "ash clouds travel very far"
    raw = f"Position: {paraphrase} # Answer: ash # Question: How far does ash travel?"
    stub = CannedStub([raw, "ash", "How far does ash go?"])
    qset = run_finetuned(article_doc, "Joint", stub)
    assert qset.items[0].position == 3
    assert qset.items[0].raw_anchor == paraphrase


def test_run_finetuned_empty_pp_output_warns(article_doc, caplog):
    qset = run_finetuned(article_doc, "Pipeline", CannedStub(["   "]), concurrency=1)
    assert qset.items == ()


def test_run_finetuned_bad_joint_output_raises(article_doc):
    with pytest.raises(GenerationError) as err:
        run_finetuned(article_doc, "Joint", CannedStub(["not a joint sequence"]))
    assert err.value.raw_text


def test_run_finetuned_segments_long_documents(article_doc):
    stub = FinetunedStub("Joint")
    qset = run_finetuned(article_doc, "Joint", stub, max_input_tokens=25)
    assert len(stub.calls) >= 2
    positions = [it.position for it in qset.items]
    assert positions == sorted(positions)
    assert all(1 <= p <= article_doc.n for p in positions)
    assert len(set((it.position, it.question) for it in qset.items)) == len(qset.items)


def test_run_zero_shot_with_stub(article_doc):
    qset = run_zero_shot(article_doc, AnnotationStub())
    assert qset.paradigm == "ZeroShot"
    assert len(qset.items) == 2
    for item in qset.items:
        assert item.question.endswith("?")
        assert 1 <= item.position <= article_doc.n


def test_run_zero_shot_skips_malformed_blocks(article_doc):
    s1 = article_doc.sentence(1)
    raw = (
        f"Output 1:\nPosition: {s1}\nAnswer Keywords: lava\nQuestion: What hardens?\n\n"
        f"Output 2:\nPosition: {article_doc.sentence(4)}\nAnswer Keywords: soil\n"
    )
    qset = run_zero_shot(article_doc, CannedStub([raw]))
    assert len(qset.items) == 1
    assert qset.items[0].position == 1


def test_run_zero_shot_verbatim_anchor_exact_match(article_doc):
    s4 = article_doc.sentence(4)
    raw = f"Output 1:\nPosition: {s4}\nAnswer Keywords: soil\nQuestion: Why farm there?"
    qset = run_zero_shot(article_doc, CannedStub([raw]))
    assert qset.items[0].position == 4


def test_run_zero_shot_nothing_parseable_raises(article_doc):
    with pytest.raises(GenerationError):
        run_zero_shot(article_doc, CannedStub(["no blocks here at all"]))


def _qset(doc_id, positions, paradigm="Joint"):
    items = tuple(
        GeneratedItem(question=f"Why point {p}?", position=p) for p in positions
    )
    return GeneratedQuestionSet(doc_id=doc_id, paradigm=paradigm, items=items)


def test_control_count_truncates_in_position_order(article_doc):
    qset = _qset("volcano", [5, 1, 3, 2, 4])
    out = control_question_count(qset, 3, article_doc, FinetunedStub("Joint"))
    assert [it.position for it in out.items] == [1, 2, 3]


def test_control_count_identity(article_doc):
    qset = _qset("volcano", [1, 2, 3])
    out = control_question_count(qset, 3, article_doc, FinetunedStub("Joint"))
    assert out.items == qset.items


def test_control_count_partial_with_warning(article_doc, caplog):
    # the stub always regenerates the same two items, so the set can never
    # reach four questions
    stub = FinetunedStub("Joint")
    qset = run_finetuned(article_doc, "Joint", stub)
    out = control_question_count(qset, 4, article_doc, stub, retry_cap=2)
    assert len(out.items) == 2
    assert "continuation retries" in caplog.text


def test_question_sets_jsonl_roundtrip(tmp_path, article_doc):
    sets = [
        run_finetuned(article_doc, "JointR", FinetunedStub("JointR")),
        run_zero_shot(article_doc, AnnotationStub()),
    ]
    path = tmp_path / "gen.jsonl"
    save_question_sets(sets, path)
    assert load_question_sets(path) == sets


def test_generated_items_positions_always_valid(article_doc):
    for paradigm in ("Pipeline", "Multitask", "Joint", "JointR"):
        qset = run_finetuned(article_doc, paradigm, FinetunedStub(paradigm), concurrency=1)
        for item in qset.items:
            assert 1 <= item.position <= article_doc.n
            assert item.question.endswith("?")


def test_all_paradigms_deterministic_under_stubs(article_doc):
    for paradigm in ("Pipeline", "Multitask", "Joint", "JointR"):
        first = run_finetuned(article_doc, paradigm, FinetunedStub(paradigm), concurrency=1)
        second = run_finetuned(article_doc, paradigm, FinetunedStub(paradigm), concurrency=1)
        assert first == second
    assert run_zero_shot(article_doc, AnnotationStub()) == \
        run_zero_shot(article_doc, AnnotationStub())
