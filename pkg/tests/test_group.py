from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marg.backend import ChatMessage, ScriptedBackend, ScriptedExchange
from marg.corpus import chunk_paper, ingest
from marg.errors import PromptTemplateError
from marg.group import GroupConfig, GroupLimits, init_group, run_group
from marg.prompts import NO_RESPONSE_MARKERS, PromptBundle
from marg.transcript import script_from_transcript

WORKER_MARKER, EXPERT_MARKER = NO_RESPONSE_MARKERS


def make_chunks(n: int):
    doc = {"title": "T", "sections": [{"name": f"S{i}", "paragraphs": [f"Paragraph {i} " + "word " * 80]} for i in range(n)]}
    chunks = chunk_paper(ingest(doc), 100)
    assert len(chunks) == n
    return chunks


class Scripted:
    """Per-agent reply queues; falls back to ``default`` (or a callable) when a queue runs dry."""

    def __init__(self, replies: dict[str, list[str]] | None = None, default="Ready"):
        self.replies = {k: list(v) for k, v in (replies or {}).items()}
        self.default = default
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        queue = self.replies.get(request.agent)
        if queue:
            return queue.pop(0)
        return self.default(request) if callable(self.default) else self.default

    def backend(self, **kw) -> ScriptedBackend:
        return ScriptedBackend(responder=self, **kw)


def config(n_chunks=2, expert=False, **kw) -> GroupConfig:
    kw.setdefault("serial", True)
    return GroupConfig(
        chunks=make_chunks(n_chunks),
        leader_task_prompt="Task: do it {expert_1}" if expert else "Task: do it",
        expert_prompt="You are an expert." if expert else None,
        name="g",
        **kw,
    )


# ------------------------------------------------------------------ init


def test_numbering_without_expert():
    group = init_group(config(2), Scripted().backend())
    assert [(a.id_label, a.kind) for a in group.agents] == [("Agent 0", "leader"), ("Agent 1", "worker"), ("Agent 2", "worker")]


def test_expert_is_last_numbered():
    group = init_group(config(3, expert=True), Scripted().backend())
    assert len(group.agents) == 5
    assert group.experts[0].id_label == "Agent 4"
    assert group.task_values == {"expert_1": "Agent 4"}


def test_pinned_prompts_and_ready():
    script = Scripted()
    group = init_group(config(2), script.backend())
    leader = group.leader
    assert [m.role for m in leader.pinned] == ["system", "system"]
    assert "You are Agent 0." in leader.pinned[1].content
    w = group.workers[1]
    assert [m.role for m in w.pinned] == ["system", "user", "assistant"]
    assert "You are Agent 2." in w.pinned[1].content
    assert "The other agent(s) are: Agent 0, Agent 1." in w.pinned[1].content
    assert group.config.chunks[1].text in w.pinned[1].content
    assert w.pinned[2].content == "Ready"
    assert [e.kind for e in group.transcript] == ["group_init", "ready", "ready"]
    # handshakes go to non-leaders only
    assert {r.agent for r in script.requests} == {"Agent 1", "Agent 2"}


def test_missing_agent_name_in_chunk_template():
    bad = PromptBundle().templates["worker_chunk"].replace("{agent_name}", "you")
    with pytest.raises(PromptTemplateError):
        init_group(_with_template(bad), Scripted().backend())


def _with_template(worker_chunk: str) -> GroupConfig:
    bundle = PromptBundle()
    bundle.templates["worker_chunk"] = worker_chunk  # bypass constructor validation
    return config(2, prompt_set=bundle)


def test_task_with_unknown_placeholder_fails_before_any_call():
    script = Scripted()
    cfg = config(2)
    cfg.leader_task_prompt = "Task: ask {expert_9}"
    with pytest.raises(PromptTemplateError):
        init_group(cfg, script.backend())
    assert script.requests == []


# ------------------------------------------------------------------ rounds


def test_broadcast_feeds_leader_two_messages_then_reminder():
    script = Scripted({"Agent 1": ["Ready", "A"], "Agent 2": ["Ready", "B"]})
    group = init_group(config(2), script.backend())
    group.turn = 1
    group.broadcast_round("What is in your chunk?")
    hist = group.leader.history
    assert [(m.role, m.kind) for m in hist] == [("system", "received"), ("system", "received"), ("system", "reminder")]
    assert hist[0].content == "Message from Agent 1:\nA"
    assert hist[1].content == "Message from Agent 2:\nB"
    for w in group.workers:
        assert w.history[0] == ChatMessage("system", "Message from Agent 0:\nWhat is in your chunk?", "received", 1)


def test_no_response_reply_excluded_but_recorded():
    script = Scripted({"Agent 1": ["Ready", WORKER_MARKER], "Agent 2": ["Ready", "B"]})
    group = init_group(config(2), script.backend())
    group.turn = 1
    group.broadcast_round("Anyone?")
    received = [m.content for m in group.leader.history if m.kind == "received"]
    assert received == ["Message from Agent 2:\nB"]
    (declined,) = [e for e in group.transcript.of_kind("reply") if e.no_response]
    assert declined.sender == "Agent 1"


def test_named_decliner_gets_one_followup():
    script = Scripted({"Agent 1": ["Ready", "fine"], "Agent 2": ["Ready", WORKER_MARKER, "Here it is."]})
    group = init_group(config(2), script.backend())
    group.turn = 1
    group.broadcast_round("Agent 2, answer Q")
    assert len(group.transcript.with_tag("no_response_followup")) == 1
    assert "Message from Agent 2:\nHere it is." in [m.content for m in group.leader.history]
    replies = [e for e in group.transcript.of_kind("reply") if e.sender == "Agent 2"]
    assert [e.no_response for e in replies] == [True, False]


@pytest.mark.parametrize(
    "body, replies",
    [
        ("Please summarize.", {"Agent 1": ["Ready", WORKER_MARKER]}),
        ("Agent 1, summarize.", {"Agent 1": ["Ready", "Substantive."]}),
        ("Agent 2, summarize.", {"Agent 1": ["Ready", WORKER_MARKER]}),
    ],
)
def test_no_followup_cases(body, replies):
    group = init_group(config(2), Scripted(replies, default="ok").backend())
    group.turn = 1
    group.broadcast_round(body)
    assert group.transcript.with_tag("no_response_followup") == []


def test_duplicate_detection_rules():
    group = init_group(config(2), Scripted(default="ok").backend())
    group.turn = 1
    group.broadcast_round("Thanks.")
    assert group.detect_duplicate("Thanks.")
    assert group.leader.history[-1].role == "user"
    assert group.leader.history[-1].kind == "interjection"

    group.broadcast_round("A  B")
    assert group.detect_duplicate("A B")
    group.broadcast_round("A")
    assert not group.detect_duplicate("a")


def test_empty_broadcast_rejected():
    group = init_group(config(2), Scripted().backend())
    with pytest.raises(ValueError):
        group.broadcast_round("  ")


# ------------------------------------------------------------------ pruning


def _msg(kind: str, rnd: int, role="system") -> ChatMessage:
    return ChatMessage(role, f"{kind}-{rnd}", kind, rnd)


def test_worker_keeps_newest_three():
    group = init_group(config(2, expert=True), Scripted().backend())
    w = group.workers[0]
    w.history = [_msg("received", i) for i in range(7)]
    group.prune()
    assert [m.round for m in w.history] == [4, 5, 6]
    assert len(w.pinned) == 3


def test_leader_keeps_outputs_and_latest_batch():
    group = init_group(config(2, expert=True), Scripted().backend())
    o1, o2 = _msg("output", 1, "assistant"), _msg("output", 2, "assistant")
    r1 = [_msg("received", 1), _msg("received", 1), _msg("reminder", 1)]
    r2 = [_msg("received", 2), _msg("received", 2), _msg("reminder", 2)]
    group.leader.history = [o1, *r1, o2, *r2]
    group.turn = 2
    group.prune()
    assert group.leader.history == [o1, o2, *r2]


def test_expert_never_pruned():
    group = init_group(config(2, expert=True), Scripted().backend())
    e = group.experts[0]
    e.history = [_msg("received", i) for i in range(50)]
    group.turn = 60
    group.prune()
    assert len(e.history) == 50


# ------------------------------------------------------------------ run_task


def test_one_round_then_final_answer():
    script = Scripted({"Agent 0": ["Plan.\nSEND MESSAGE: Summarize.", "Thanks, done.", "1. A\n2. B"]}, default="ok")
    answer = run_group(config(2), script.backend())
    assert answer.ok and not answer.forced
    assert answer.rounds == 1 and answer.leader_turns == 2
    assert answer.text == "1. A\n2. B"
    kinds = [e.kind for e in answer.transcript]
    assert kinds[-2:] == ["final_prompt", "final_answer"]
    final_prompt = answer.transcript.of_kind("final_prompt")[0].content
    assert final_prompt == PromptBundle()["final_answer"]


def test_max_turns_forces_elicitation():
    counter = iter(range(10**6))

    def leader_or_worker(request):
        if request.agent == "Agent 0":
            return f"SEND MESSAGE: question {next(counter)}"
        return "ok"

    script = Scripted(default=leader_or_worker)
    answer = run_group(config(2, limits=GroupLimits(max_leader_turns=4)), script.backend())
    assert answer.forced and answer.ok
    assert answer.leader_turns == 4
    leader_calls = [r for r in script.requests if r.agent == "Agent 0"]
    assert len(leader_calls) == 5


def test_empty_send_gets_reminder():
    script = Scripted({"Agent 0": ["SEND MESSAGE:", "done", "1. x"]}, default="ok")
    answer = run_group(config(2), script.backend())
    assert answer.rounds == 0
    reminders = [e for e in answer.transcript.of_kind("reminder") if e.turn == 1]
    assert len(reminders) == 1 and "protocol_reminder" in reminders[0].tags


def test_token_limit_aborts_with_partial_transcript():
    backend = ScriptedBackend(
        [
            ScriptedExchange(agent="Agent 0", reply="SEND MESSAGE: go", max_uses=1),
            ScriptedExchange(agent="Agent 2", contains="Message from Agent 0", error="token_limit"),
        ],
        strict=False,
        default_reply="ok",
    )
    answer = run_group(config(2), backend)
    assert not answer.ok and "TokenLimitError" in answer.error
    assert answer.transcript.events[-1].kind == "error"
    assert answer.transcript.of_kind("broadcast")


def test_group_limit_checked_before_backend():
    script = Scripted(default="ok")
    answer = run_group(config(2, limits=GroupLimits(input_token_limit=50)), script.backend())
    assert not answer.ok
    assert script.requests == []


def test_setup_failure_is_reported():
    backend = ScriptedBackend([ScriptedExchange(agent="Agent 1", error="transport")], strict=False)
    answer = run_group(config(2), backend)
    assert not answer.ok and "setup" in answer.error
    assert answer.transcript.events[-1].kind == "error"


def test_parallel_and_serial_agree():
    def run(serial):
        script = Scripted({"Agent 0": ["SEND MESSAGE: a", "SEND MESSAGE: b", "end", "1. z"]}, default=lambda r: f"reply from {r.agent}")
        return run_group(config(3, expert=True, serial=serial), script.backend(concurrency_limit=4)).transcript.to_jsonl()

    assert run(True) == run(False)


# ------------------------------------------------------------------ randomized protocol properties


def _random_script(seed: int, n_agents: int):
    rng = random.Random(seed)
    bodies = ["Summarize your chunk.", "Thanks.", "Agent 1, list the baselines.", "Agent 2 what is N?", "Thanks.  "]

    def respond(request):
        if request.agent == "Agent 0":
            r = rng.random()
            if r < 0.15:
                return "All done."
            if r < 0.25:
                return "SEND MESSAGE:"
            if r < 0.35:
                return rng.choice(bodies) + "\nSEND FULL MESSAGE"
            return "Step.\nSEND MESSAGE: " + rng.choice(bodies)
        if len(request.messages) == 2:  # handshake
            return "Ready"
        return rng.choice([WORKER_MARKER, EXPERT_MARKER, f"{request.agent} says {rng.randint(0, 9)}"])

    return respond


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 3), st.booleans(), st.integers(1, 12))
def test_protocol_invariants(seed, n_chunks, expert, max_turns):
    cfg = config(n_chunks, expert=expert, limits=GroupLimits(max_leader_turns=max_turns))
    script = Scripted(default=_random_script(seed, n_chunks))
    group = init_group(cfg, script.backend())

    tails = []
    leader_outputs = []
    original_prune = group.prune

    def prune():
        original_prune()
        tails.extend(len(w.history) for w in group.workers)
        leader_outputs.append([m for m in group.leader.history if m.role == "assistant"])

    group.prune = prune
    answer = group.run_task()
    assert answer.ok

    # termination bound
    leader_calls = [r for r in script.requests if r.agent == "Agent 0"]
    assert len(leader_calls) <= max_turns + 1
    # worker tail bound after every round
    assert all(n <= cfg.limits.worker_tail_limit for n in tails)
    # leader outputs are append-only across pruning
    for before, after in zip(leader_outputs, leader_outputs[1:]):
        assert after[: len(before)] == before
    # each non-duplicate broadcast reaches every non-leader exactly once
    bodies = [e.content for e in answer.transcript.of_kind("broadcast")]
    for agent in group.others:
        seen = [r.messages[-1].content for r in script.requests if r.agent == agent.id_label and r.messages[-1].kind == "received"]
        assert seen == [f"Message from Agent 0:\n{b}" for b in bodies]

    # replaying the transcript reproduces it exactly
    replay = ScriptedBackend(script_from_transcript(answer.transcript))
    again = run_group(cfg, replay)
    assert again.transcript.to_jsonl() == answer.transcript.to_jsonl()
