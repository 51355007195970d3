"""Group transcripts: ordered event logs, JSON-lines persistence, rendering and replay."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .backend import ScriptedExchange

CORRECTION_TAGS = frozenset(
    {"duplicate_interjection", "protocol_reminder", "no_response_followup", "misplaced_marker"}
)

# event kinds that correspond to exactly one completion by ``sender``
GENERATED_KINDS = frozenset({"ready", "leader_output", "reply", "final_answer"})


@dataclass
class TranscriptEvent:
    seq: int
    turn: int
    kind: str
    sender: str
    receiver: str
    content: str
    tags: list[str] = field(default_factory=list)
    no_response: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "TranscriptEvent":
        return cls(
            seq=int(d["seq"]),
            turn=int(d["turn"]),
            kind=str(d["kind"]),
            sender=str(d["sender"]),
            receiver=str(d["receiver"]),
            content=str(d["content"]),
            tags=list(d.get("tags", [])),
            no_response=bool(d.get("no_response", False)),
        )


class GroupTranscript:
    """Append-only event log for one agent group."""

    def __init__(self, group: str = "", events: Iterable[TranscriptEvent] = ()) -> None:
        self.group = group
        self.events: list[TranscriptEvent] = list(events)

    def add(self, turn: int, kind: str, sender: str, receiver: str, content: str, *, tags: Iterable[str] = (), no_response: bool = False) -> TranscriptEvent:
        tags = sorted(set(tags))
        unknown = set(tags) - CORRECTION_TAGS
        if unknown:
            raise ValueError(f"unknown correction tag(s): {sorted(unknown)}")
        if self.events and turn < self.events[-1].turn:
            raise ValueError("transcript turns must be non-decreasing")
        event = TranscriptEvent(len(self.events), turn, kind, sender, receiver, content, tags, no_response)
        self.events.append(event)
        return event

    def __iter__(self) -> Iterator[TranscriptEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def with_tag(self, tag: str) -> list[TranscriptEvent]:
        return [e for e in self.events if tag in e.tags]

    def of_kind(self, kind: str) -> list[TranscriptEvent]:
        return [e for e in self.events if e.kind == kind]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str, group: str = "") -> "GroupTranscript":
        events = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                events.append(TranscriptEvent.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: bad transcript event: {exc}") from exc
        return cls(group, events)

    @classmethod
    def read(cls, path: str | Path) -> "GroupTranscript":
        path = Path(path)
        group = path.stem[len("group-") :] if path.stem.startswith("group-") else path.stem
        return cls.from_jsonl(path.read_text(encoding="utf-8"), group)


def render_event(event: TranscriptEvent) -> str:
    if event.kind == "broadcast":
        head = f"Message from {event.sender}:"
        if event.receiver != "broadcast":
            head += f"  (to {event.receiver})"
    elif event.kind == "reply":
        head = f"Message from {event.sender}:"
    else:
        head = f"[{event.kind}] {event.sender} -> {event.receiver}"
    flags = list(event.tags) + (["no_response"] if event.no_response else [])
    if flags:
        head += "  <<" + ", ".join(flags) + ">>"
    return f"--- turn {event.turn} #{event.seq}\n{head}\n{event.content}\n"


def render(events: Iterable[TranscriptEvent], tag: str | None = None) -> str:
    chosen = [e for e in events if tag is None or tag in e.tags]
    return "\n".join(render_event(e) for e in chosen)


def script_from_transcript(transcript: GroupTranscript) -> list[ScriptedExchange]:
    """One single-use exchange per generated message, keyed by agent and group.

    Each agent's completions are issued in order, so replaying the script
    hands every agent back its own outputs in sequence.
    """
    return [
        ScriptedExchange(reply=e.content, agent=e.sender, group=transcript.group or None, max_uses=1)
        for e in transcript.events
        if e.kind in GENERATED_KINDS
    ]
