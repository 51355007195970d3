"""Multi-agent review generators: MARG-S (specialized groups plus refinement) and MARG-TP."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

from .backend import Backend
from .comments import format_numbered, parse_comment_list, parse_refinement
from .corpus import DEFAULT_CHUNK_BUDGET, PaperChunk, StructuredPaper, chunk_paper
from .errors import EmptyReviewWarning
from .group import FinalAnswer, GroupConfig, GroupLimits, run_group
from .prompts import PromptBundle
from .review import GROUP_KINDS, Review, ReviewComment

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# kind -> (task prompt key, expert prompt key, placeholder naming the expert)
SPECIALISTS = {
    "experiments": ("task_experiments", "expert_experiments", "expert_2"),
    "clarity": ("task_clarity", "expert_clarity", "expert_1"),
    "impact": ("task_impact", "expert_impact", "expert_1"),
}


@dataclass
class PipelineOptions:
    prompts: PromptBundle = field(default_factory=PromptBundle)
    limits: GroupLimits = field(default_factory=GroupLimits)
    chunk_budget: int = DEFAULT_CHUNK_BUDGET
    # run groups (and agents within a round) one at a time
    serial: bool = False
    max_parallel_groups: int = 4


def map_ordered(fn: Callable[[T], R], items: Sequence[T], *, serial: bool, limit: int) -> list[R]:
    """``[fn(x) for x in items]``, optionally on a thread pool; order is kept."""
    if serial or len(items) <= 1 or limit <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(limit, len(items))) as pool:
        return list(pool.map(fn, items))


def _chunks(paper: StructuredPaper, backend: Backend, options: PipelineOptions) -> list[PaperChunk]:
    return chunk_paper(paper, options.chunk_budget, backend.counter)


def _record_failure(review: Review, group: str, answer: FinalAnswer) -> None:
    review.errors.append({"group": group, "error": answer.error or "unknown"})


def _fill_usage(review: Review, backend: Backend) -> None:
    n_in, n_out = backend.ledger.totals(review.method_label, review.paper_id)
    review.usage = {"input_tokens": n_in, "generated_tokens": n_out}


def generate_mini_review(
    chunks: Sequence[PaperChunk],
    kind: str,
    backend: Backend,
    options: PipelineOptions | None = None,
    *,
    method_label: str = "MARG-S",
    paper_id: str = "",
) -> tuple[list[ReviewComment], FinalAnswer]:
    """One specialized group (leader, a worker per chunk, one expert) and its parsed comments."""
    if kind not in SPECIALISTS:
        raise ValueError(f"unknown mini-review kind {kind!r}")
    options = options or PipelineOptions()
    task_key, expert_key, placeholder = SPECIALISTS[kind]
    config = GroupConfig(
        chunks=chunks,
        leader_task_prompt=options.prompts[task_key],
        expert_prompt=options.prompts[expert_key],
        prompt_set=options.prompts,
        limits=options.limits,
        name=kind,
        method=method_label,
        paper_id=paper_id,
        expert_placeholder=placeholder,
        serial=options.serial,
    )
    answer = run_group(config, backend)
    if not answer.ok:
        return [], answer
    texts = parse_comment_list(answer.text)
    if not texts:
        logger.warning("%s mini-review for %s produced no comments", kind, paper_id or "paper")
        warnings.warn(f"{kind} mini-review produced no comments", EmptyReviewWarning, stacklevel=2)
    return [ReviewComment(t, method_label, kind, "initial") for t in texts], answer


def refine_comment(
    chunks: Sequence[PaperChunk],
    comment: ReviewComment,
    origin_index: int,
    backend: Backend,
    options: PipelineOptions | None = None,
    *,
    paper_id: str = "",
) -> tuple[list[ReviewComment], FinalAnswer]:
    """Check one comment against the paper in a fresh group without an expert.

    Returns 0..k refined comments. If the group fails, the original comment
    comes back unchanged with a ``refinement_failed`` flag.
    """
    if comment.stage != "initial":
        raise ValueError("only initial comments can be refined")
    options = options or PipelineOptions()
    config = GroupConfig(
        chunks=chunks,
        leader_task_prompt=options.prompts.render("refine_comment", review_comments=comment.text),
        expert_prompt=None,
        prompt_set=options.prompts,
        limits=options.limits,
        name=f"refine-{origin_index}",
        method=comment.method_label,
        paper_id=paper_id,
        final_prompt_key="refine_final_answer",
        serial=options.serial,
    )
    answer = run_group(config, backend)
    if not answer.ok:
        logger.warning("refinement of comment %d failed (%s); keeping original", origin_index, answer.error)
        kept = ReviewComment(
            comment.text,
            comment.method_label,
            comment.group_kind,
            "initial",
            origin_index,
            comment.flags + ("refinement_failed",),
        )
        return [kept], answer
    refined = [
        ReviewComment(t, comment.method_label, comment.group_kind, "refined", origin_index)
        for t in parse_refinement(answer.text)
    ]
    return refined, answer


def marg_s_review(
    paper: StructuredPaper,
    backend: Backend,
    options: PipelineOptions | None = None,
    *,
    refine: bool = True,
) -> Review:
    """Three specialized mini-reviews, concatenated in experiments, clarity, impact order.

    With ``refine`` every initial comment is then refined by its own group.
    A failed group contributes no comments and an entry in ``Review.errors``.
    """
    options = options or PipelineOptions()
    label = "MARG-S" if refine else "MARG-S-noref"
    chunks = _chunks(paper, backend, options)
    review = Review(paper.paper_id, label)

    def mini(kind: str):
        return generate_mini_review(chunks, kind, backend, options, method_label=label, paper_id=paper.paper_id)

    results = map_ordered(mini, list(GROUP_KINDS), serial=options.serial, limit=options.max_parallel_groups)
    initial: list[ReviewComment] = []
    for kind, (comments, answer) in zip(GROUP_KINDS, results):
        review.transcripts[kind] = answer.transcript
        if not answer.ok:
            _record_failure(review, kind, answer)
        initial.extend(comments)

    if not refine:
        review.comments = initial
    else:
        def refine_one(item: tuple[int, ReviewComment]):
            index, comment = item
            return refine_comment(chunks, comment, index, backend, options, paper_id=paper.paper_id)

        refined = map_ordered(refine_one, list(enumerate(initial)), serial=options.serial, limit=options.max_parallel_groups)
        for index, (comments, answer) in enumerate(refined):
            review.transcripts[f"refine-{index}"] = answer.transcript
            if not answer.ok:
                _record_failure(review, f"refine-{index}", answer)
            review.comments.extend(comments)

    if not review.comments:
        logger.warning("%s review for %s is empty", label, paper.paper_id or "paper")
    _fill_usage(review, backend)
    return review


def marg_tp_review(paper: StructuredPaper, backend: Backend, options: PipelineOptions | None = None) -> Review:
    """One expert-free group with the tuned task prompt, then one group-wide refinement pass."""
    options = options or PipelineOptions()
    label = "MARG-TP"
    chunks = _chunks(paper, backend, options)
    review = Review(paper.paper_id, label)
    common = dict(
        chunks=chunks,
        expert_prompt=None,
        prompt_set=options.prompts,
        limits=options.limits,
        method=label,
        paper_id=paper.paper_id,
        worker_system_key="worker_system_tp",
        serial=options.serial,
    )
    answer = run_group(GroupConfig(leader_task_prompt=options.prompts["marg_tp_task"], name="main", **common), backend)
    review.transcripts["main"] = answer.transcript
    if not answer.ok:
        _record_failure(review, "main", answer)
        _fill_usage(review, backend)
        return review
    initial = parse_comment_list(answer.text)
    if not initial:
        logger.warning("MARG-TP produced no comments for %s", paper.paper_id or "paper")
        warnings.warn("MARG-TP produced no comments", EmptyReviewWarning, stacklevel=2)
        _fill_usage(review, backend)
        return review

    task = options.prompts.render("marg_tp_refine", review_comments=format_numbered(initial))
    refined = run_group(GroupConfig(leader_task_prompt=task, name="refine", **common), backend)
    review.transcripts["refine"] = refined.transcript
    if refined.ok:
        # the list is refined as a whole, so no per-comment lineage exists
        review.comments = [ReviewComment(t, label, None, "refined") for t in parse_comment_list(refined.text)]
    else:
        _record_failure(review, "refine", refined)
        review.comments = [ReviewComment(t, label, None, "initial", flags=("refinement_failed",)) for t in initial]
    _fill_usage(review, backend)
    return review
