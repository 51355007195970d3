"""Comment extraction and two-stage alignment of generated against real review comments."""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from ..backend import Backend, ChatMessage, CompletionRequest
from ..comments import format_numbered, parse_comment_list
from ..prompts import PromptBundle

logger = logging.getLogger(__name__)


class Relatedness(IntEnum):
    NONE = 0
    WEAK = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Relatedness":
        return cls[str(text).strip().upper()]


class Specificity(IntEnum):
    LESS = 0
    SAME = 1
    MORE = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Specificity":
        return cls[str(text).strip().upper()]


@dataclass(frozen=True)
class CommentSet:
    owner: str
    comments: tuple[str, ...]
    review_id: str = ""

    def __post_init__(self) -> None:
        if self.owner not in ("generated", "real"):
            raise ValueError(f"unknown owner {self.owner!r}")
        # exact-string dedup, first occurrence wins
        object.__setattr__(self, "comments", tuple(dict.fromkeys(self.comments)))

    def __len__(self) -> int:
        return len(self.comments)


@dataclass(frozen=True)
class Candidate:
    gen_index: int
    real_index: int
    votes: int


@dataclass(frozen=True)
class AlignmentEdge:
    gen_index: int
    real_index: int
    relatedness: Relatedness
    specificity: Specificity
    votes: int = 5

    def to_dict(self) -> dict:
        return {
            "gen_index": self.gen_index,
            "real_index": self.real_index,
            "relatedness": self.relatedness.label,
            "specificity": self.specificity.label,
            "votes": self.votes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentEdge":
        return cls(
            int(d["gen_index"]),
            int(d["real_index"]),
            Relatedness.parse(d["relatedness"]),
            Specificity.parse(d["specificity"]),
            int(d.get("votes", 5)),
        )


def decide_match(
    r: Relatedness,
    s: Specificity,
    min_r: Relatedness = Relatedness.MEDIUM,
    min_s: Specificity = Specificity.SAME,
) -> bool:
    return r >= min_r and s >= min_s


def matched_edges(
    scored: Iterable[AlignmentEdge],
    min_r: Relatedness = Relatedness.MEDIUM,
    min_s: Specificity = Specificity.SAME,
) -> list[AlignmentEdge]:
    return [e for e in scored if decide_match(e.relatedness, e.specificity, min_r, min_s)]


def _ask(backend: Backend, prompts: PromptBundle, user: str, group: str, tags: dict[str, str] | None) -> str:
    merged = {"method": "eval", "group": group, "agent": "evaluator"}
    merged.update(tags or {})
    request = CompletionRequest(
        backend.model_id,
        (ChatMessage("system", prompts["eval_system"]), ChatMessage("user", user)),
        tags=merged,
    )
    return backend.complete(request).content


def extract_comments(
    review_text: str,
    backend: Backend,
    *,
    review_id: str = "",
    prompts: PromptBundle | None = None,
    tags: dict[str, str] | None = None,
) -> CommentSet:
    """Actionable comments from one free-text review."""
    prompts = prompts or PromptBundle()
    reply = _ask(backend, prompts, prompts.render("eval_extract", review_text=review_text), "extract", tags)
    return CommentSet("real", tuple(parse_comment_list(reply)), review_id)


# ------------------------------------------------------------------ many-many stage

def _json_values(text: str, opens: str = "[{"):
    """Every JSON value that starts at one of ``opens`` in ``text``, left to right."""
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in opens:
            try:
                yield decoder.raw_decode(text, i)[0]
            except json.JSONDecodeError:
                continue


def parse_pairs(text: str) -> list[tuple[int, int]] | None:
    """1-based (review 1, review 2) number pairs from a matcher reply, or None if unreadable."""
    for value in _json_values(text):
        if isinstance(value, dict):
            value = value.get("pairs", value.get("matches"))
        if not isinstance(value, list):
            continue
        pairs = []
        try:
            for item in value:
                if isinstance(item, dict):
                    pairs.append((int(item["review_1"]), int(item["review_2"])))
                else:
                    a, b = item
                    pairs.append((int(a), int(b)))
        except (KeyError, TypeError, ValueError):
            continue
        return pairs
    return None


def aggregate_votes(
    passes: Sequence[Iterable[tuple[int, int]] | None], vote_threshold: int = 2
) -> list[Candidate]:
    """Count in how many passes each canonical pair appeared; keep those at the threshold."""
    votes: Counter[tuple[int, int]] = Counter()
    for pairs in passes:
        if pairs is None:
            continue
        votes.update(set(pairs))
    return [Candidate(g, r, n) for (g, r), n in sorted(votes.items()) if n >= vote_threshold]


def many_many_match(
    gen: CommentSet,
    real: CommentSet,
    backend: Backend,
    *,
    passes: int = 5,
    vote_threshold: int = 2,
    seed: int = 0,
    prompts: PromptBundle | None = None,
    tags: dict[str, str] | None = None,
) -> list[Candidate]:
    """Cheap recall-oriented matching: several shuffled passes, majority-ish vote.

    Each pass shuffles both comment lists and which review is shown first.
    Returned pairs are mapped back to canonical indices by comment text.
    """
    if not gen.comments or not real.comments:
        return []
    prompts = prompts or PromptBundle()
    rng = random.Random(seed)
    gen_pos = {text: i for i, text in enumerate(gen.comments)}
    real_pos = {text: i for i, text in enumerate(real.comments)}
    results: list[set[tuple[int, int]] | None] = []
    for k in range(passes):
        gen_order = list(gen.comments)
        real_order = list(real.comments)
        rng.shuffle(gen_order)
        rng.shuffle(real_order)
        gen_first = rng.random() < 0.5
        first, second = (gen_order, real_order) if gen_first else (real_order, gen_order)
        user = prompts.render("eval_many_many", review_1=format_numbered(first), review_2=format_numbered(second))
        reply = _ask(backend, prompts, user, f"match-{k + 1}", tags)
        raw = parse_pairs(reply)
        if raw is None:
            logger.warning("many-many pass %d: unparseable reply, no votes", k + 1)
            results.append(None)
            continue
        found = set()
        for a, b in raw:
            if not (1 <= a <= len(first) and 1 <= b <= len(second)):
                logger.warning("many-many pass %d: pair (%d, %d) out of range, ignored", k + 1, a, b)
                continue
            g_text, r_text = (first[a - 1], second[b - 1]) if gen_first else (second[b - 1], first[a - 1])
            found.add((gen_pos[g_text], real_pos[r_text]))
        results.append(found)
    return aggregate_votes(results, vote_threshold)


# ------------------------------------------------------------------ pairwise stage


def parse_pairwise(text: str) -> tuple[Relatedness, Specificity] | None:
    for value in _json_values(text, "{"):
        if isinstance(value, dict):
            try:
                return Relatedness.parse(value["relatedness"]), Specificity.parse(value["specificity"])
            except (KeyError, AttributeError):
                continue
    return None


def pairwise_score(
    gen_comment: str,
    real_comment: str,
    backend: Backend,
    *,
    prompts: PromptBundle | None = None,
    tags: dict[str, str] | None = None,
) -> tuple[Relatedness, Specificity]:
    """Relatedness and relative specificity of one generated/real pair; (none, less) if unreadable."""
    prompts = prompts or PromptBundle()
    user = prompts.render("eval_pairwise", generated_comment=gen_comment, real_comment=real_comment)
    reply = _ask(backend, prompts, user, "pairwise", tags)
    parsed = parse_pairwise(reply)
    if parsed is None:
        logger.warning("pairwise: unparseable reply %r; scoring (none, less)", reply[:120])
        return Relatedness.NONE, Specificity.LESS
    return parsed


def score_candidates(
    gen: CommentSet,
    real: CommentSet,
    candidates: Sequence[Candidate],
    backend: Backend,
    *,
    prompts: PromptBundle | None = None,
    tags: dict[str, str] | None = None,
) -> list[AlignmentEdge]:
    edges = []
    for c in candidates:
        r, s = pairwise_score(gen.comments[c.gen_index], real.comments[c.real_index], backend, prompts=prompts, tags=tags)
        edges.append(AlignmentEdge(c.gen_index, c.real_index, r, s, c.votes))
    return edges


def align(
    gen: CommentSet,
    real: CommentSet,
    backend: Backend,
    *,
    passes: int = 5,
    vote_threshold: int = 2,
    seed: int = 0,
    prompts: PromptBundle | None = None,
    tags: dict[str, str] | None = None,
) -> list[AlignmentEdge]:
    """Both stages; returns every scored candidate (apply :func:`matched_edges` to threshold)."""
    candidates = many_many_match(
        gen, real, backend, passes=passes, vote_threshold=vote_threshold, seed=seed, prompts=prompts, tags=tags
    )
    return score_candidates(gen, real, candidates, backend, prompts=prompts, tags=tags)


def detect_compliment(
    comment: str,
    backend: Backend,
    *,
    prompts: PromptBundle | None = None,
    tags: dict[str, str] | None = None,
) -> bool:
    prompts = prompts or PromptBundle()
    merged = {"method": "eval", "group": "compliment", "agent": "evaluator"}
    merged.update(tags or {})
    request = CompletionRequest(
        backend.model_id,
        (ChatMessage("system", prompts["eval_system"]), ChatMessage("user", prompts.render("compliment", comment=comment))),
        tags=merged,
    )
    reply = backend.complete(request).content
    for value in _json_values(reply, "{"):
        if isinstance(value, dict) and isinstance(value.get("has_compliment"), bool):
            return value["has_compliment"]
    logger.warning("compliment detector: unparseable reply %r; assuming false", reply[:120])
    return False
