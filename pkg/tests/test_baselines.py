from __future__ import annotations

import pytest

from marg.backend import ScriptedBackend, ScriptedExchange
from marg.baselines import LIZCA_RESERVE, BaselineConfig, lizca_review, sarg_b_review, sarg_tp_review
from marg.comments import parse_comment_list
from marg.corpus import chunk_paper, ingest, render_units
from marg.errors import EmptyReviewWarning

SERIAL = BaselineConfig(serial=True)


def _groups(backend) -> list[str]:
    return [e.group for e in backend.ledger.entries]


def test_sarg_b_calls_and_comments(three_chunk, scripted):
    backend = scripted("baselines_three_chunk")
    review = sarg_b_review(three_chunk, backend, SERIAL)
    assert _groups(backend) == ["chunk-1", "chunk-2", "chunk-3", "merge"]
    assert len(review.comments) == 4
    assert review.method_label == "SARG-B"
    assert review.usage == dict(zip(("input_tokens", "generated_tokens"), backend.ledger.totals("SARG-B")))


def test_sarg_b_merge_sees_lists_in_chunk_order(three_chunk):
    seen = []

    def respond(request):
        if request.group == "merge":
            seen.append(request.messages[-1].content)
            return "1. merged"
        return f"1. from {request.group}"

    sarg_b_review(three_chunk, ScriptedBackend(responder=respond, concurrency_limit=3), BaselineConfig())
    (merge_input,) = seen
    positions = [merge_input.index(f"List {i}:\n1. from chunk-{i}") for i in (1, 2, 3)]
    assert positions == sorted(positions)


def test_sarg_b_single_chunk_still_merges():
    paper = ingest({"title": "T", "sections": [{"name": "S", "paragraphs": ["short"]}]})
    backend = ScriptedBackend(responder=lambda r: "1. c")
    sarg_b_review(paper, backend, SERIAL)
    assert _groups(backend) == ["chunk-1", "merge"]


def test_sarg_b_chunk_failure(three_chunk, scripted):
    backend = scripted("sarg_b_chunk_failure")
    review = sarg_b_review(three_chunk, backend, SERIAL)
    assert _groups(backend) == ["chunk-1", "chunk-3", "merge"]
    assert [e["group"] for e in review.errors] == ["chunk-2"]
    assert len(review.comments) == 4


def test_merge_sees_surviving_lists_only(three_chunk):
    seen = []

    def respond(request):
        if request.group == "merge":
            seen.append(request.messages[-1].content)
        return "1. c"

    backend = ScriptedBackend([ScriptedExchange(group="chunk-2", error="transport")], responder=respond)
    sarg_b_review(three_chunk, backend, SERIAL)
    assert "List 2:" in seen[0] and "List 3:" not in seen[0]


def test_sarg_b_merge_failure_falls_back_to_union(three_chunk):
    backend = ScriptedBackend(
        [ScriptedExchange(group="merge", error="transport")],
        responder=lambda r: f"1. a {r.group}\n2. b {r.group}",
    )
    review = sarg_b_review(three_chunk, backend, SERIAL)
    assert review.texts == [f"{x} chunk-{i}" for i in (1, 2, 3) for x in ("a", "b")]
    assert review.errors[0]["group"] == "merge"


def test_sarg_tp_calls_and_pruning(three_chunk, scripted):
    backend = scripted("baselines_three_chunk")
    review = sarg_tp_review(three_chunk, backend, SERIAL)
    assert _groups(backend) == ["chunk-1", "chunk-2", "chunk-3", "merge", "refine-1", "refine-2", "refine-3"]
    merged = parse_comment_list([e for e in backend.exchanges if e.method == "SARG-TP" and e.group == "merge"][0].reply)
    assert len(review.comments) < len(merged)
    assert {c.stage for c in review.comments} == {"refined"}


def test_sarg_tp_refinement_is_sequential(two_chunk):
    seen = {}

    def respond(request):
        if request.group.startswith("refine"):
            seen[request.group] = request.messages[-1].content
            return f"1. after {request.group}"
        return "1. x"

    backend = ScriptedBackend(responder=respond)
    review = sarg_tp_review(two_chunk, backend, SERIAL)
    assert _groups(backend) == ["chunk-1", "chunk-2", "merge", "refine-1", "refine-2"]
    assert "1. after refine-1" in seen["refine-2"]
    assert review.texts == ["after refine-2"]


def test_sarg_tp_chunk_context(two_chunk):
    captured = []
    sarg_tp_review(two_chunk, ScriptedBackend(responder=lambda r: captured.append(r) or "1. x"), SERIAL)
    first = captured[0].messages
    # the acknowledgement is part of the context, not a completion
    assert [m.role for m in first] == ["system", "user", "assistant", "user"]
    assert first[2].content == "Ready"
    assert len(captured) == 2 * 2 + 1


def test_sarg_tp_empty_merge_still_refines(two_chunk):
    backend = ScriptedBackend(responder=lambda r: "" if r.group == "merge" else "1. y" if r.group == "refine-2" else "")
    review = sarg_tp_review(two_chunk, backend, SERIAL)
    assert _groups(backend)[-2:] == ["refine-1", "refine-2"]
    assert review.texts == ["y"]


def test_lizca_two_calls(three_chunk, scripted):
    backend = scripted("baselines_three_chunk")
    review = lizca_review(three_chunk, backend, SERIAL)
    assert _groups(backend) == ["outline", "criticism"]
    assert len(review.comments) == 2


def _lizca_input(paper, config) -> str:
    captured = []

    def respond(request):
        captured.append(request.messages[-1].content)
        return "1. c"

    backend = ScriptedBackend(responder=respond)
    lizca_review(paper, backend, config)
    return captured[0], backend


def test_lizca_truncates_at_unit_boundary(three_chunk):
    text, backend = _lizca_input(three_chunk, BaselineConfig(truncation_budget=6000))
    units = render_units(three_chunk, include_captions=True)
    kept = [u for u in units if u.text in text]
    assert sum(u.tokens for u in kept) <= 6000
    assert kept == units[: len(kept)] and len(kept) < len(units)
    # the next unit was not partially included
    assert units[len(kept)].text[:60] not in text


def test_lizca_default_budget_from_input_limit(three_chunk):
    text, backend = _lizca_input(three_chunk, BaselineConfig())
    units = render_units(three_chunk, include_captions=True)
    kept = [u for u in units if u.text in text]
    assert sum(u.tokens for u in kept) <= backend.input_limit - LIZCA_RESERVE


def test_lizca_captions_toggle(two_chunk):
    with_caps, _ = _lizca_input(two_chunk, BaselineConfig())
    without, _ = _lizca_input(two_chunk, BaselineConfig(include_captions=False))
    caption = two_chunk.sections[[bool(s.captions) for s in two_chunk.sections].index(True)].captions[0]
    assert caption in with_caps and caption not in without


def test_lizca_no_truncation_when_it_fits():
    paper = ingest({"title": "T", "sections": [{"name": "S", "paragraphs": ["a", "b"]}]})
    text, backend = _lizca_input(paper, BaselineConfig())
    assert text.count("Paragraph") == 2
    assert len(backend.ledger) == 2


def test_lizca_bad_budget(two_chunk):
    with pytest.raises(ValueError):
        lizca_review(two_chunk, ScriptedBackend(), BaselineConfig(truncation_budget=0))


def test_empty_review_warns(two_chunk):
    with pytest.warns(EmptyReviewWarning):
        review = sarg_b_review(two_chunk, ScriptedBackend(responder=lambda r: ""), SERIAL)
    assert review.comments == []


def test_same_chunks_as_multi_agent(three_chunk):
    backend = ScriptedBackend(responder=lambda r: "1. c")
    sarg_b_review(three_chunk, backend, SERIAL)
    assert len(backend.ledger) == len(chunk_paper(three_chunk)) + 1
