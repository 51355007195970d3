"""Parsing of leader outputs and the text checks used for error correction."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

SEND_MARKER = "SEND MESSAGE:"
FULL_MARKER = "SEND FULL MESSAGE"
BROADCAST = "broadcast"

# "SEND MESSAGE TO ALL AGENTS:" / "SEND MESSAGE TO AGENT 3:" show up in real
# traces even though the prompt only teaches the plain form.
_ADDRESSED_RE = re.compile(r"SEND MESSAGE TO ([^:\n]{1,60}):")
_ALL_RE = re.compile(r"^(all|everyone|all agents|all the agents|the group|group)$", re.I)
_WS_RE = re.compile(r"\s+")
# "[insert the comment here]", "<summary goes here>", "[comment]"-style stand-ins
_PLACEHOLDER_RE = re.compile(
    r"[\[<{(](?:insert|paste|add|include|summary|comment|list|text)\b[^\]>})\n]{0,80}[\]>})]",
    re.I,
)


@dataclass(frozen=True)
class Send:
    body: str
    marker: str = SEND_MARKER
    addressee: str = BROADCAST


@dataclass(frozen=True)
class Terminal:
    text: str = ""


def parse_outgoing(text: str) -> Send | Terminal:
    """Split a leader output into the part other agents see, if any.

    The earliest send marker wins. ``SEND FULL MESSAGE`` only applies when no
    ``SEND MESSAGE`` form is present, and sends everything before it.
    """
    plain = text.find(SEND_MARKER)
    addressed = _ADDRESSED_RE.search(text)
    if addressed is not None and (plain < 0 or addressed.start() < plain):
        target = addressed.group(1).strip()
        body = text[addressed.end() :].strip()
        if _ALL_RE.match(target):
            return Send(body, marker=addressed.group(0))
        label = _canonical_label(target)
        if body:
            body = f"{label}: {body}"
        return Send(body, marker=addressed.group(0), addressee=label)
    if plain >= 0:
        return Send(text[plain + len(SEND_MARKER) :].strip())
    full = text.find(FULL_MARKER)
    if full >= 0:
        return Send(text[:full].strip(), marker=FULL_MARKER)
    return Terminal(text)


def _canonical_label(target: str) -> str:
    m = re.fullmatch(r"agent\s+(\d+)", target.strip(), re.I)
    return f"Agent {m.group(1)}" if m else target


def normalize_body(body: str) -> str:
    """Whitespace-collapsed, case-preserved form used for duplicate detection."""
    return _WS_RE.sub(" ", body).strip()


def mentioned_agents(body: str, labels: Iterable[str]) -> list[str]:
    """Labels that occur in ``body`` as whole words, ignoring case and spacing."""
    found = []
    for label in labels:
        parts = [re.escape(p) for p in label.split()]
        pattern = r"(?<![\w])" + r"\s+".join(parts) + r"(?![\w])"
        if re.search(pattern, body, re.I):
            found.append(label)
    return found


def _simplify(text: str) -> str:
    text = text.replace("’", "'").replace("‘", "'").replace("“", '"').replace("”", '"')
    return _WS_RE.sub(" ", text).strip().lower()


def _lead_clause(marker: str) -> str:
    m = re.search(r"[,.;]", marker)
    return _simplify(marker[: m.start()] if m else marker)


def is_no_response(reply: str, markers: Sequence[str]) -> bool:
    """True when ``reply`` opens with the leading clause of a no-response marker.

    Agents paraphrase the tail of the sentence often enough that matching the
    whole marker misses real declines.
    """
    simple = _simplify(reply)
    simple = simple.lstrip("\"' ")
    if simple.startswith("send message:"):
        simple = simple[len("send message:") :].lstrip()
    return any(clause and simple.startswith(clause) for clause in map(_lead_clause, markers))


def has_placeholder(text: str) -> bool:
    return _PLACEHOLDER_RE.search(text) is not None
