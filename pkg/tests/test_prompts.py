from __future__ import annotations

import json

import pytest

from marg import prompts as P
from marg.errors import PromptTemplateError
from marg.prompts import DEFAULT_PROMPTS, REQUIRED_PLACEHOLDERS, PromptBundle, load_bundle, placeholders, render


def test_every_default_has_its_required_placeholders():
    for key, needed in REQUIRED_PLACEHOLDERS.items():
        assert needed <= placeholders(DEFAULT_PROMPTS[key]), key


def test_markers_are_the_sentences_agents_are_taught():
    worker_marker, expert_marker = P.NO_RESPONSE_MARKERS
    assert worker_marker in P.WORKER_SYSTEM
    assert expert_marker in P.EXPERT_EXPERIMENTS


def test_protocol_strings_present():
    assert '"SEND MESSAGE: "' in P.LEADER_SYSTEM
    assert '"SEND FULL MESSAGE"' in P.LEADER_SYSTEM
    assert 'Write "Ready"' in P.WORKER_CHUNK


def test_task_prompts_name_their_expert():
    assert "{expert_2}" in P.TASK_EXPERIMENTS
    assert "{expert_1}" in P.TASK_CLARITY
    assert "{expert_1}" in P.TASK_IMPACT
    for task in (P.TASK_EXPERIMENTS, P.TASK_CLARITY, P.TASK_IMPACT):
        assert task.startswith("Task:")


def test_refinement_prompt_carries_the_comment():
    text = PromptBundle().render("refine_comment", review_comments="Add ablations.")
    assert "Add ablations." in text


def test_render_fills_values():
    assert render("Hi {name}, {name}.", {"name": "Ann"}) == "Hi Ann, Ann."


def test_unresolved_placeholder():
    with pytest.raises(PromptTemplateError):
        render("Hi {name}", {})


def test_worker_chunk_override_missing_agent_name():
    bad = DEFAULT_PROMPTS["worker_chunk"].replace("{agent_name}", "someone")
    with pytest.raises(PromptTemplateError):
        PromptBundle({"worker_chunk": bad})


def test_render_checks_required_slots():
    bundle = PromptBundle()
    with pytest.raises(PromptTemplateError):
        bundle.render("no_response_followup")
    assert "Agent 3" in bundle.render("no_response_followup", agent_name="Agent 3")


def test_unknown_key_rejected():
    with pytest.raises(PromptTemplateError):
        PromptBundle({"leader_sytem": "typo"})
    with pytest.raises(PromptTemplateError):
        PromptBundle({"leader_system": 3})


def test_bundle_files(tmp_path):
    js = tmp_path / "b.json"
    js.write_text(json.dumps({"schema_version": 1, "final_answer": "Done? List it.", "no_response_markers": ["Pass."]}))
    bundle = load_bundle(js)
    assert bundle["final_answer"] == "Done? List it."
    assert bundle.no_response_markers == ("Pass.",)
    assert bundle["leader_system"] == DEFAULT_PROMPTS["leader_system"]

    toml = tmp_path / "b.toml"
    toml.write_text('compliment = "Is {comment} nice?"\n')
    assert load_bundle(toml).render("compliment", comment="x") == "Is x nice?"
    assert load_bundle(None)["compliment"] == DEFAULT_PROMPTS["compliment"]


def test_bad_marker_override():
    with pytest.raises(PromptTemplateError):
        PromptBundle({"no_response_markers": "Pass."})
