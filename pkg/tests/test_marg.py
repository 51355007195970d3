from __future__ import annotations


import pytest

from marg.backend import ScriptedBackend, ScriptedExchange
from marg.corpus import chunk_paper
from marg.errors import EmptyReviewWarning
from marg.marg import PipelineOptions, generate_mini_review, marg_s_review, marg_tp_review, refine_comment
from marg.review import ReviewComment

SERIAL = PipelineOptions(serial=True)


def _final(group: str, text: str) -> list[ScriptedExchange]:
    """A leader that ends at once, then gives ``text`` as its final answer in ``group``."""
    return [
        ScriptedExchange(agent="Agent 0", group=group, reply="Nothing to ask.", max_uses=1),
        ScriptedExchange(agent="Agent 0", group=group, reply=text, max_uses=1),
    ]


def _backend(exchanges) -> ScriptedBackend:
    return ScriptedBackend(exchanges, strict=False, default_reply="Ready")


@pytest.fixture
def chunks(two_chunk):
    return chunk_paper(two_chunk)


def test_mini_review_numbered_answer(chunks):
    backend = _backend(_final("experiments", "1. Add baseline X.\n2. Report variance."))
    comments, answer = generate_mini_review(chunks, "experiments", backend, SERIAL)
    assert [c.text for c in comments] == ["Add baseline X.", "Report variance."]
    assert {(c.group_kind, c.stage) for c in comments} == {("experiments", "initial")}
    assert answer.transcript.of_kind("ready")[-1].sender == "Agent 3"


def test_mini_review_names_expert_in_task(chunks):
    backend = _backend(_final("experiments", "1. x"))
    _, answer = generate_mini_review(chunks, "experiments", backend, SERIAL)
    task = answer.transcript.of_kind("task")[0].content
    assert "Agent 3" in task and "{expert_2}" not in task


def test_mini_review_empty_answer_warns(chunks):
    backend = _backend(_final("clarity", ""))
    with pytest.warns(EmptyReviewWarning):
        comments, _ = generate_mini_review(chunks, "clarity", backend, SERIAL)
    assert comments == []


def test_refine_one_to_one(chunks):
    backend = _backend(_final("refine-0", '{"revised_comment": "Improved text"}'))
    original = ReviewComment("Old text", "MARG-S", "experiments")
    refined, answer = refine_comment(chunks, original, 0, backend, SERIAL)
    assert [(c.text, c.stage, c.origin_index) for c in refined] == [("Improved text", "refined", 0)]
    # no expert in refinement groups
    assert all("expert" not in e.content for e in answer.transcript.of_kind("group_init"))
    assert answer.transcript.of_kind("final_prompt")[0].content == SERIAL.prompts["refine_final_answer"]


def test_refine_pruned_and_split(chunks):
    backend = _backend(_final("refine-4", '{"revised_comments": []}') + _final("refine-5", '{"revised_comments": ["a", "b"]}'))
    original = ReviewComment("Old", "MARG-S", "impact")
    assert refine_comment(chunks, original, 4, backend, SERIAL)[0] == []
    split, _ = refine_comment(chunks, original, 5, backend, SERIAL)
    assert [(c.text, c.origin_index, c.group_kind) for c in split] == [("a", 5, "impact"), ("b", 5, "impact")]


def test_refine_failure_passes_original_through(chunks):
    backend = _backend([ScriptedExchange(agent="Agent 0", group="refine-2", error="token_limit")])
    original = ReviewComment("Keep me", "MARG-S", "clarity")
    (kept,), answer = refine_comment(chunks, original, 2, backend, SERIAL)
    assert not answer.ok
    assert (kept.text, kept.stage, kept.origin_index, kept.flags) == ("Keep me", "initial", 2, ("refinement_failed",))


def test_refine_rejects_refined_input(chunks):
    with pytest.raises(ValueError):
        refine_comment(chunks, ReviewComment("x", "MARG-S", stage="refined", origin_index=0), 0, _backend([]))


def test_marg_s_scripted_fixture(two_chunk, scripted):
    review = marg_s_review(two_chunk, scripted("marg_s_two_chunk"), SERIAL)
    assert review.method_label == "MARG-S"
    assert [c.group_kind for c in review.comments] == ["experiments"] * 3 + ["clarity", "impact"]
    assert [c.origin_index for c in review.comments] == [0, 1, 1, 2, 3]
    assert all(c.stage == "refined" for c in review.comments)
    assert sorted(review.transcripts) == ["clarity", "experiments", "impact", "refine-0", "refine-1", "refine-2", "refine-3"]
    assert review.usage["input_tokens"] > 0 and not review.errors


def test_marg_s_without_refinement(two_chunk, scripted):
    review = marg_s_review(two_chunk, scripted("marg_s_two_chunk"), SERIAL, refine=False)
    assert review.method_label == "MARG-S-noref"
    assert [c.group_kind for c in review.comments] == ["experiments", "experiments", "clarity", "impact"]
    assert {c.stage for c in review.comments} == {"initial"}
    assert not any(k.startswith("refine") for k in review.transcripts)


def test_marg_s_parallel_matches_serial(two_chunk, scripted):
    serial = marg_s_review(two_chunk, scripted("marg_s_two_chunk"), SERIAL)
    parallel = marg_s_review(two_chunk, scripted("marg_s_two_chunk", concurrency_limit=4), PipelineOptions(max_parallel_groups=4))
    assert parallel.to_dict() == serial.to_dict()
    for name, t in serial.transcripts.items():
        assert parallel.transcripts[name].to_jsonl() == t.to_jsonl()


def test_marg_s_group_failure_is_partial(two_chunk, scripted):
    review = marg_s_review(two_chunk, scripted("marg_s_clarity_overflow"), SERIAL)
    assert [e["group"] for e in review.errors] == ["clarity"]
    assert review.partial
    assert [c.group_kind for c in review.comments] == ["experiments"] * 3 + ["impact"]
    assert [c.origin_index for c in review.comments] == [0, 1, 1, 2]


def test_marg_s_lineage_conservation(two_chunk):
    """Refinement outputs per origin are 0..k and every refined comment has an origin."""
    answers = {
        "experiments": "1. e1\n2. e2",
        "clarity": "1. c1",
        "impact": "1. i1\n2. i2",
        "refine-0": '{"revised_comments": []}',
        "refine-1": '{"revised_comments": ["e2a", "e2b", "e2c"]}',
        "refine-2": '{"revised_comment": "c1!"}',
        "refine-3": '{"revised_comments": []}',
        "refine-4": '{"revised_comment": "i2!"}',
    }
    exchanges = [x for group, text in answers.items() for x in _final(group, text)]
    review = marg_s_review(two_chunk, _backend(exchanges), SERIAL)
    assert [(c.text, c.origin_index) for c in review.comments] == [
        ("e2a", 1), ("e2b", 1), ("e2c", 1), ("c1!", 2), ("i2!", 4)
    ]
    assert all(c.origin_index is not None for c in review.comments)


def test_marg_tp_fixture(two_chunk, scripted):
    backend = scripted("marg_tp_two_chunk")
    review = marg_tp_review(two_chunk, backend, SERIAL)
    assert review.method_label == "MARG-TP"
    assert sorted(review.transcripts) == ["main", "refine"]
    assert all(c.stage == "refined" and c.origin_index is None for c in review.comments)
    assert len(review.comments) == 2
    refine_tasks = review.transcripts["refine"].of_kind("task")
    assert len(refine_tasks) == 1


def test_marg_tp_three_comments(two_chunk):
    exchanges = _final("main", "1. a\n2. b\n3. c") + _final("refine", "1. a\n2. b\n3. c")
    review = marg_tp_review(two_chunk, _backend(exchanges), SERIAL)
    assert review.texts == ["a", "b", "c"]
    assert {c.method_label for c in review.comments} == {"MARG-TP"}


def test_marg_tp_empty_answer(two_chunk):
    with pytest.warns(EmptyReviewWarning):
        review = marg_tp_review(two_chunk, _backend(_final("main", "")), SERIAL)
    assert review.comments == [] and "refine" not in review.transcripts
