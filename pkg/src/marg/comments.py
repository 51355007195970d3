"""Turning free-form model answers into comment lists."""

from __future__ import annotations

import json
import re
from typing import Any

_JSON_KEYS = ("comments", "revised_comments", "revised_comment")
_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)
_NUMBERED_RE = re.compile(r"^(\s*)(\d+)[.)]\s+(.*)$")
_BULLET_RE = re.compile(r"^(\s*)[-*•]\s+(.*)$")
_BOLD_RE = re.compile(r"\*\*(.+?)\*\*|__(.+?)__")
_PRUNE_RE = re.compile(
    r"\b(should be (removed|pruned|discarded|deleted)|remove (this|the) comment|comment is (not valid|invalid)|is invalid|prune)\b",
    re.I,
)


class _NoJSON(Exception):
    pass


def _from_json_value(value: Any) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    if isinstance(value, list):
        out = []
        for item in value:
            if isinstance(item, str):
                out.append(item)
            elif isinstance(item, dict):
                text = item.get("comment") or item.get("text")
                if isinstance(text, str):
                    out.append(text)
                else:
                    raise _NoJSON
            elif item is None:
                continue
            else:
                raise _NoJSON
        return out
    if isinstance(value, dict):
        for key in _JSON_KEYS:
            if key in value:
                return _from_json_value(value[key])
    raise _NoJSON


def _json_candidates(text: str):
    for m in _FENCE_RE.finditer(text):
        yield m.group(1).strip()
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "[{":
            try:
                value, _ = decoder.raw_decode(text, i)
            except json.JSONDecodeError:
                continue
            yield value


def extract_json_comments(text: str) -> list[str] | None:
    """Comments from the first JSON list, or object keyed by a comments field, in ``text``."""
    stripped = text.strip()
    if stripped == "null":
        return []
    for candidate in _json_candidates(text):
        if isinstance(candidate, str):
            try:
                candidate = json.loads(candidate)
            except json.JSONDecodeError:
                continue
        if not isinstance(candidate, (list, dict)):
            continue
        try:
            items = _from_json_value(candidate)
        except _NoJSON:
            continue
        return [clean_item(s) for s in items if clean_item(s)]
    return None


def clean_item(text: str) -> str:
    text = _BOLD_RE.sub(lambda m: m.group(1) or m.group(2), text)
    return re.sub(r"\s+", " ", text).strip()


def _collect(lines: list[str], pattern: re.Pattern, body_group: int) -> list[str]:
    """Items start at lines matching ``pattern`` at the outermost indent seen.

    Deeper-indented lines, and unindented lines directly under an item, are
    folded into it. A blank line followed by unindented prose ends the list.
    """
    indents = [len(m.group(1)) for line in lines if (m := pattern.match(line))]
    if not indents:
        return []
    indent = min(indents)
    items: list[list[str]] = []
    blank = False
    for line in lines:
        m = pattern.match(line)
        if m and len(m.group(1)) == indent:
            items.append([m.group(body_group)])
            blank = False
        elif not items:
            continue
        elif not line.strip():
            blank = True
        elif blank and len(line) - len(line.lstrip()) <= indent:
            break  # prose after the list
        else:
            items[-1].append(line.strip())
            blank = False
    return [t for t in (clean_item(" ".join(parts)) for parts in items) if t]


def parse_comment_list(text: str) -> list[str]:
    """JSON first, then numbered lines, then bullets, then the whole text as one comment."""
    if not text or not text.strip():
        return []
    from_json = extract_json_comments(text)
    if from_json is not None:
        return from_json
    lines = text.splitlines()
    numbered = _collect(lines, _NUMBERED_RE, 3)
    if numbered:
        return numbered
    bullets = _collect(lines, _BULLET_RE, 2)
    if bullets:
        return bullets
    return [clean_item(text)]


def is_prune_signal(text: str) -> bool:
    """A refinement answer that says to drop the comment instead of giving one."""
    return bool(_PRUNE_RE.search(text))


def parse_refinement(text: str) -> list[str]:
    """Refined comments from a refinement group's final answer; [] means pruned."""
    if not text or not text.strip():
        return []
    from_json = extract_json_comments(text)
    if from_json is not None:
        return from_json
    has_list = any(_NUMBERED_RE.match(line) for line in text.splitlines())
    if is_prune_signal(text) and not has_list and '"' not in text:
        return []
    return parse_comment_list(text)


def format_numbered(comments: list[str]) -> str:
    return "\n".join(f"{i}. {c}" for i, c in enumerate(comments, 1))
