"""Review and comment records shared by every generation method."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import SchemaError

SCHEMA_VERSION = 1
METHOD_LABELS = ("SARG-B", "SARG-TP", "MARG-TP", "MARG-S", "MARG-S-noref", "LiZCa")
GROUP_KINDS = ("experiments", "clarity", "impact")
STAGES = ("initial", "refined")


@dataclass(frozen=True)
class ReviewComment:
    text: str
    method_label: str
    group_kind: str | None = None
    stage: str = "initial"
    origin_index: int | None = None
    # e.g. "refinement_failed" when a comment passed through a broken refinement group
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("comment text must be non-empty")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.group_kind is not None and self.group_kind not in GROUP_KINDS:
            raise ValueError(f"unknown group kind {self.group_kind!r}")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "text": self.text,
            "group_kind": self.group_kind,
            "stage": self.stage,
            "origin_index": self.origin_index,
        }
        if self.flags:
            d["flags"] = list(self.flags)
        return d


@dataclass
class Review:
    paper_id: str
    method_label: str
    comments: list[ReviewComment] = field(default_factory=list)
    # transcript file names (group-<name>.jsonl) or in-memory transcripts keyed by group
    transcripts: dict[str, Any] = field(default_factory=dict)
    errors: list[dict[str, str]] = field(default_factory=list)
    usage: dict[str, int] = field(default_factory=lambda: {"input_tokens": 0, "generated_tokens": 0})

    @property
    def texts(self) -> list[str]:
        return [c.text for c in self.comments]

    @property
    def partial(self) -> bool:
        return bool(self.errors)

    def to_dict(self, metadata: dict[str, Any] | None = None) -> dict[str, Any]:
        d: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "paper_id": self.paper_id,
            "method_label": self.method_label,
            "comments": [c.to_dict() for c in self.comments],
            "usage": dict(self.usage),
            "transcripts": sorted(self.transcripts),
            "errors": list(self.errors),
        }
        if metadata is not None:
            d["metadata"] = metadata
        return d

    def write(self, path: str | Path, metadata: dict[str, Any] | None = None) -> None:
        text = json.dumps(self.to_dict(metadata), indent=2, ensure_ascii=False)
        Path(path).write_text(text + "\n", encoding="utf-8")


def review_from_dict(d: dict[str, Any]) -> Review:
    try:
        method = d["method_label"]
        comments = [
            ReviewComment(
                text=c["text"],
                method_label=method,
                group_kind=c.get("group_kind"),
                stage=c.get("stage", "initial"),
                origin_index=c.get("origin_index"),
                flags=tuple(c.get("flags", ())),
            )
            for c in d.get("comments", [])
        ]
        return Review(
            paper_id=str(d.get("paper_id", "")),
            method_label=method,
            comments=comments,
            transcripts={name: name for name in d.get("transcripts", [])},
            errors=list(d.get("errors", [])),
            usage=dict(d.get("usage", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed review: {exc}") from exc


def read_review(path: str | Path) -> Review:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: review must be a JSON object")
    return review_from_dict(data)
