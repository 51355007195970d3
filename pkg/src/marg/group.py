"""Leader/worker/expert agent groups and the broadcast protocol that drives them."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backend import Backend, ChatMessage, CompletionRequest, request_tokens
from .corpus import PaperChunk
from .errors import BackendError, GroupAbortedError, PromptTemplateError, TokenLimitError
from .prompts import PromptBundle, render
from .protocol import (
    BROADCAST,
    FULL_MARKER,
    Send,
    Terminal,
    has_placeholder,
    is_no_response,
    mentioned_agents,
    normalize_body,
    parse_outgoing,
)
from .transcript import GroupTranscript

logger = logging.getLogger(__name__)

LEADER_ID = "Agent 0"


@dataclass(frozen=True)
class AgentRole:
    kind: str
    id_label: str

    def __post_init__(self) -> None:
        if self.kind not in ("leader", "worker", "expert"):
            raise ValueError(f"unknown agent kind {self.kind!r}")


@dataclass
class Agent:
    role: AgentRole
    pinned: list[ChatMessage] = field(default_factory=list)
    history: list[ChatMessage] = field(default_factory=list)

    @property
    def id_label(self) -> str:
        return self.role.id_label

    @property
    def kind(self) -> str:
        return self.role.kind

    def messages(self) -> tuple[ChatMessage, ...]:
        return tuple(self.pinned) + tuple(self.history)


@dataclass(frozen=True)
class GroupLimits:
    max_leader_turns: int = 40
    worker_tail_limit: int = 3
    input_token_limit: int = 8192

    def __post_init__(self) -> None:
        for name in ("max_leader_turns", "worker_tail_limit", "input_token_limit"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class GroupConfig:
    chunks: Sequence[PaperChunk]
    leader_task_prompt: str
    expert_prompt: str | None = None
    prompt_set: PromptBundle = field(default_factory=PromptBundle)
    limits: GroupLimits = field(default_factory=GroupLimits)
    name: str = "group"
    method: str = ""
    paper_id: str = ""
    # task placeholder that names the expert, e.g. "expert_2"
    expert_placeholder: str = "expert_1"
    worker_system_key: str = "worker_system"
    final_prompt_key: str = "final_answer"
    serial: bool = False

    def __post_init__(self) -> None:
        if not self.chunks:
            raise ValueError("a group needs at least one chunk")


@dataclass
class FinalAnswer:
    text: str
    transcript: GroupTranscript
    error: str | None = None
    leader_turns: int = 0
    rounds: int = 0
    forced: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None


class AgentGroup:
    """One leader, one worker per chunk, and an optional expert.

    Build with :func:`init_group`, which also runs the "Ready" handshakes.
    """

    def __init__(self, config: GroupConfig, backend: Backend) -> None:
        self.config = config
        self.backend = backend
        self.prompts = config.prompt_set
        self.transcript = GroupTranscript(config.name)
        self.turn = 0
        self.rounds = 0
        self.sent_bodies: set[str] = set()
        self.task_values: dict[str, str] = {}

        n_workers = len(config.chunks)
        roles = [AgentRole("leader", LEADER_ID)]
        roles += [AgentRole("worker", f"Agent {i}") for i in range(1, n_workers + 1)]
        if config.expert_prompt is not None:
            roles.append(AgentRole("expert", f"Agent {n_workers + 1}"))
        self.agents = [Agent(r) for r in roles]

    # ------------------------------------------------------------ accessors

    @property
    def leader(self) -> Agent:
        return self.agents[0]

    @property
    def workers(self) -> list[Agent]:
        return [a for a in self.agents if a.kind == "worker"]

    @property
    def experts(self) -> list[Agent]:
        return [a for a in self.agents if a.kind == "expert"]

    @property
    def others(self) -> list[Agent]:
        return self.agents[1:]

    def agent(self, id_label: str) -> Agent:
        for a in self.agents:
            if a.id_label == id_label:
                return a
        raise KeyError(id_label)

    def _agent_info(self, agent: Agent) -> dict[str, str]:
        others = [a.id_label for a in self.agents if a is not agent]
        return {
            "num_agents": str(len(self.agents)),
            "agent_name": agent.id_label,
            "other_agent_names": ", ".join(others),
        }

    # ------------------------------------------------------------ backend

    def _generate(self, agent: Agent) -> str:
        messages = agent.messages()
        n = request_tokens(messages, self.backend.counter)
        limit = self.config.limits.input_token_limit
        if n > limit:
            raise TokenLimitError(
                f"{agent.id_label} in group {self.config.name}: request of {n} tokens exceeds limit {limit}",
                tokens=n,
                limit=limit,
            )
        request = CompletionRequest(
            self.backend.model_id,
            messages,
            tags={
                "method": self.config.method,
                "paper_id": self.config.paper_id,
                "group": self.config.name,
                "agent": agent.id_label,
            },
        )
        return self.backend.complete(request).content

    def _say(self, agent: Agent, turn: int) -> str:
        text = self._generate(agent)
        agent.history.append(ChatMessage("assistant", text, kind="output", round=turn))
        return text

    # ------------------------------------------------------------ setup

    def _setup_prompts(self) -> None:
        p = self.prompts
        leader = self.leader
        leader.pinned = [
            ChatMessage("system", p["leader_system"], kind="pinned"),
            ChatMessage("system", p.render("agent_info", **self._agent_info(leader)), kind="pinned"),
        ]
        worker_system = p[self.config.worker_system_key]
        for worker, chunk in zip(self.workers, self.config.chunks):
            worker.pinned = [
                ChatMessage("system", worker_system, kind="pinned"),
                ChatMessage(
                    "user",
                    p.render("worker_chunk", paper_chunk=chunk.text, **self._agent_info(worker)),
                    kind="pinned",
                ),
            ]
        for expert in self.experts:
            info = p.render("agent_info", **self._agent_info(expert))
            expert.pinned = [
                ChatMessage("system", self.config.expert_prompt or "", kind="pinned"),
                ChatMessage("user", p.render("expert_ready", agent_info=info), kind="pinned"),
            ]

    def _handshake(self) -> None:
        t = self.transcript
        t.add(0, "group_init", "system", BROADCAST, ", ".join(f"{a.id_label} ({a.kind})" for a in self.agents))
        replies = self._parallel(self.others, lambda a: self._generate(a))
        for agent, reply in zip(self.others, replies):
            agent.pinned.append(ChatMessage("assistant", reply, kind="pinned"))
            t.add(0, "ready", agent.id_label, LEADER_ID, reply)

    def _parallel(self, agents: Sequence[Agent], fn) -> list:
        """Run ``fn`` per agent, possibly concurrently; results in agent order.

        Every call finishes before the first failure (in agent order) is raised.
        """
        if self.config.serial or len(agents) <= 1 or self.backend.concurrency_limit <= 1:
            return [fn(a) for a in agents]
        workers = min(len(agents), self.backend.concurrency_limit)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, a) for a in agents]
        errors = [f.exception() for f in futures]
        for exc in errors:
            if exc is not None:
                raise exc
        return [f.result() for f in futures]

    # ------------------------------------------------------------ protocol steps

    def detect_duplicate(self, body: str) -> bool:
        """Flag a body already sent in this group; the leader is told not to resend it."""
        if normalize_body(body) not in self.sent_bodies:
            return False
        text = self.prompts["duplicate_interjection"]
        self.leader.history.append(ChatMessage("user", text, kind="interjection", round=self.turn))
        self.transcript.add(self.turn, "interjection", "system", LEADER_ID, text, tags=["duplicate_interjection"])
        return True

    def broadcast_round(self, body: str, addressee: str = BROADCAST) -> list[tuple[Agent, str]]:
        """Deliver ``body`` to every non-leader, collect replies, feed them to the leader."""
        if not body.strip():
            raise ValueError("broadcast body must be non-empty")
        turn = self.turn
        self.rounds += 1
        self.sent_bodies.add(normalize_body(body))
        self.transcript.add(turn, "broadcast", LEADER_ID, addressee, body)
        incoming = f"Message from {LEADER_ID}:\n{body}"

        def deliver(agent: Agent) -> str:
            agent.history.append(ChatMessage("system", incoming, kind="received", round=turn))
            return self._say(agent, turn)

        replies = self._parallel(self.others, deliver)
        markers = self.prompts.no_response_markers
        declined = {}
        for agent, reply in zip(self.others, replies):
            flag = is_no_response(reply, markers)
            declined[agent.id_label] = flag
            self.transcript.add(turn, "reply", agent.id_label, LEADER_ID, reply, no_response=flag)

        results = list(zip(self.others, replies))
        results = self.no_response_followup(body, results, declined)

        for agent, reply in results:
            if declined[agent.id_label]:
                continue
            self.leader.history.append(
                ChatMessage("system", f"Message from {agent.id_label}:\n{reply}", kind="received", round=turn)
            )
        reminder = self.prompts["protocol_reminder"]
        self.leader.history.append(ChatMessage("system", reminder, kind="reminder", round=turn))
        self.transcript.add(turn, "reminder", "system", LEADER_ID, reminder, tags=["protocol_reminder"])
        return results

    def no_response_followup(
        self, body: str, results: list[tuple[Agent, str]], declined: dict[str, bool]
    ) -> list[tuple[Agent, str]]:
        """Nudge named agents that declined, and regenerate their reply once.

        ``declined`` is updated in place for regenerated replies.
        """
        named = set(mentioned_agents(body, [a.id_label for a in self.others]))
        out = []
        for agent, reply in results:
            if agent.id_label in named and declined[agent.id_label]:
                text = self.prompts.render("no_response_followup", agent_name=agent.id_label)
                agent.history.append(ChatMessage("user", text, kind="followup", round=self.turn))
                self.transcript.add(self.turn, "followup", "system", agent.id_label, text, tags=["no_response_followup"])
                reply = self._say(agent, self.turn)
                flag = is_no_response(reply, self.prompts.no_response_markers)
                declined[agent.id_label] = flag
                self.transcript.add(self.turn, "reply", agent.id_label, LEADER_ID, reply, no_response=flag)
            out.append((agent, reply))
        return out

    def prune(self) -> None:
        """Workers keep their last few messages; the leader drops older received batches."""
        tail = self.config.limits.worker_tail_limit
        for worker in self.workers:
            if len(worker.history) > tail:
                worker.history = worker.history[-tail:]
        current = self.turn
        self.leader.history = [
            m
            for m in self.leader.history
            if not (m.kind in ("received", "reminder") and m.round is not None and m.round < current)
        ]

    def _remind_empty(self) -> None:
        text = self.prompts["empty_message_reminder"]
        self.leader.history.append(ChatMessage("user", text, kind="reminder", round=self.turn))
        self.transcript.add(self.turn, "reminder", "system", LEADER_ID, text, tags=["protocol_reminder"])

    # ------------------------------------------------------------ driver

    def run_task(self, task_prompt: str | None = None) -> FinalAnswer:
        """Run the leader loop to completion and elicit the final answer.

        Backend failures abort the group; the partial transcript comes back
        with ``error`` set.
        """
        template = self.config.leader_task_prompt if task_prompt is None else task_prompt
        try:
            task = render(template, self.task_values)
        except PromptTemplateError as exc:
            raise PromptTemplateError(f"task prompt for group {self.config.name}: {exc}") from exc
        limits = self.config.limits
        t = self.transcript
        forced = True
        try:
            self.leader.pinned.append(ChatMessage("user", task, kind="pinned"))
            t.add(self.turn, "task", "user", LEADER_ID, task)
            while self.turn < limits.max_leader_turns:
                self.turn += 1
                output = self._say(self.leader, self.turn)
                parsed = parse_outgoing(output)
                tags = []
                if isinstance(parsed, Send) and (parsed.marker == FULL_MARKER or has_placeholder(parsed.body)):
                    tags.append("misplaced_marker")
                receiver = "self" if isinstance(parsed, Terminal) else parsed.addressee
                t.add(self.turn, "leader_output", LEADER_ID, receiver, output, tags=tags)
                if isinstance(parsed, Terminal):
                    forced = False
                    break
                if not parsed.body:
                    self._remind_empty()
                    continue
                if self.detect_duplicate(parsed.body):
                    continue
                self.broadcast_round(parsed.body, parsed.addressee)
                self.prune()
            if forced:
                logger.warning("group %s hit max_leader_turns=%d; forcing final answer", self.config.name, limits.max_leader_turns)
            final_turn = self.turn + 1
            prompt = self.prompts[self.config.final_prompt_key]
            self.leader.history.append(ChatMessage("user", prompt, kind="final_prompt", round=final_turn))
            t.add(final_turn, "final_prompt", "user", LEADER_ID, prompt)
            answer = self._say(self.leader, final_turn)
            t.add(final_turn, "final_answer", LEADER_ID, "user", answer)
        except BackendError as exc:
            logger.error("group %s aborted: %s", self.config.name, exc)
            t.add(max(self.turn, t.events[-1].turn if t.events else 0), "error", "system", "user", f"{type(exc).__name__}: {exc}")
            return FinalAnswer("", t, error=f"{type(exc).__name__}: {exc}", leader_turns=self.turn, rounds=self.rounds)
        return FinalAnswer(answer, t, leader_turns=self.turn, rounds=self.rounds, forced=forced)


def init_group(config: GroupConfig, backend: Backend) -> AgentGroup:
    """Create the agents, fill their prompts and collect each "Ready" reply."""
    group = AgentGroup(config, backend)
    group._setup_prompts()
    if group.experts:
        group.task_values[config.expert_placeholder] = group.experts[0].id_label
    # fail before spending any completions on a task that cannot render
    try:
        render(config.leader_task_prompt, group.task_values)
    except PromptTemplateError as exc:
        raise PromptTemplateError(f"task prompt for group {config.name}: {exc}") from exc
    try:
        group._handshake()
    except BackendError as exc:
        group.transcript.add(0, "error", "system", "user", f"{type(exc).__name__}: {exc}")
        raise GroupAbortedError(f"group {config.name} failed during setup: {exc}", group.transcript) from exc
    return group


def run_group(config: GroupConfig, backend: Backend, task_prompt: str | None = None) -> FinalAnswer:
    """init_group + run_task; setup failures come back as an errored answer too."""
    try:
        group = init_group(config, backend)
    except GroupAbortedError as exc:
        return FinalAnswer("", exc.transcript, error=str(exc))
    return group.run_task(task_prompt)
