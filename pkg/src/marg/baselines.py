"""Single-agent baselines: SARG-B, SARG-TP and the truncating LiZCa generator."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

from .backend import Backend, ChatMessage, CompletionRequest
from .comments import format_numbered, parse_comment_list
from .corpus import DEFAULT_CHUNK_BUDGET, PaperChunk, StructuredPaper, chunk_paper, render_units, truncate_rendering
from .errors import BackendError, EmptyReviewWarning
from .marg import map_ordered
from .prompts import PromptBundle
from .review import Review, ReviewComment

logger = logging.getLogger(__name__)

# tokens held back from the input limit for the LiZCa prompt and its output
LIZCA_RESERVE = 1500
AGENT = "single"


@dataclass
class BaselineConfig:
    prompts: PromptBundle = field(default_factory=PromptBundle)
    chunk_budget: int = DEFAULT_CHUNK_BUDGET
    # None means backend input limit minus LIZCA_RESERVE
    truncation_budget: int | None = None
    include_captions: bool = True
    serial: bool = False
    max_parallel: int = 4


def _ask(backend: Backend, messages: Sequence[ChatMessage], *, method: str, paper_id: str, group: str) -> str:
    request = CompletionRequest(
        backend.model_id,
        tuple(messages),
        tags={"method": method, "paper_id": paper_id, "group": group, "agent": AGENT},
    )
    return backend.complete(request).content


def _finish(review: Review, backend: Backend) -> Review:
    if not review.comments:
        logger.warning("%s review for %s is empty", review.method_label, review.paper_id or "paper")
        warnings.warn(f"{review.method_label} produced no comments", EmptyReviewWarning, stacklevel=3)
    n_in, n_out = backend.ledger.totals(review.method_label, review.paper_id)
    review.usage = {"input_tokens": n_in, "generated_tokens": n_out}
    return review


def _comment_lists(outputs: Sequence[str]) -> str:
    return "\n\n" + "\n\n".join(f"List {i}:\n{text.strip()}" for i, text in enumerate(outputs, 1))


def _per_chunk(
    chunks: Sequence[PaperChunk], fn, review: Review, config: BaselineConfig
) -> list[str]:
    """Run one completion per chunk; failed chunks are logged and left out."""

    def attempt(chunk: PaperChunk) -> str | BackendError:
        try:
            return fn(chunk)
        except BackendError as exc:
            return exc

    outputs = []
    for chunk, result in zip(chunks, map_ordered(attempt, list(chunks), serial=config.serial, limit=config.max_parallel)):
        if isinstance(result, BackendError):
            logger.warning("%s chunk %d failed: %s", review.method_label, chunk.chunk_index, result)
            review.errors.append({"group": f"chunk-{chunk.chunk_index}", "error": f"{type(result).__name__}: {result}"})
        else:
            outputs.append(result)
    return outputs


def _merge(backend: Backend, system: str, outputs: list[str], review: Review, prompts: PromptBundle) -> list[str]:
    """Merge per-chunk lists with one completion; fall back to their union."""
    try:
        merged = _ask(
            backend,
            [
                ChatMessage("system", system),
                ChatMessage("user", prompts.render("sarg_b_merge", comment_lists=_comment_lists(outputs))),
            ],
            method=review.method_label,
            paper_id=review.paper_id,
            group="merge",
        )
    except BackendError as exc:
        logger.warning("%s merge failed (%s); using union of chunk lists", review.method_label, exc)
        review.errors.append({"group": "merge", "error": f"{type(exc).__name__}: {exc}"})
        return [c for text in outputs for c in parse_comment_list(text)]
    return parse_comment_list(merged)


def sarg_b_review(paper: StructuredPaper, backend: Backend, config: BaselineConfig | None = None) -> Review:
    """One simple-prompt completion per chunk, then one merge completion."""
    config = config or BaselineConfig()
    p = config.prompts
    review = Review(paper.paper_id, "SARG-B")
    chunks = chunk_paper(paper, config.chunk_budget, backend.counter)

    def generate(chunk: PaperChunk) -> str:
        return _ask(
            backend,
            [ChatMessage("system", p["sarg_b_system"]), ChatMessage("user", p.render("sarg_b_task", paper_chunk=chunk.text))],
            method=review.method_label,
            paper_id=paper.paper_id,
            group=f"chunk-{chunk.chunk_index}",
        )

    outputs = _per_chunk(chunks, generate, review, config)
    merged = _merge(backend, p["sarg_b_system"], outputs, review, p)
    review.comments = [ReviewComment(t, review.method_label) for t in merged]
    return _finish(review, backend)


def _tp_context(p: PromptBundle, chunk: PaperChunk) -> list[ChatMessage]:
    # the "Ready" turn is part of the conversation shape, not a real completion
    return [
        ChatMessage("system", p["sarg_tp_system"]),
        ChatMessage("user", p.render("sarg_tp_chunk", paper_chunk=chunk.text)),
        ChatMessage("assistant", "Ready"),
    ]


def sarg_tp_review(paper: StructuredPaper, backend: Backend, config: BaselineConfig | None = None) -> Review:
    """Tuned per-chunk prompt, merge, then one refinement pass per chunk in chunk order.

    Each refinement pass sees the list produced by the previous one.
    """
    config = config or BaselineConfig()
    p = config.prompts
    review = Review(paper.paper_id, "SARG-TP")
    chunks = chunk_paper(paper, config.chunk_budget, backend.counter)

    def generate(chunk: PaperChunk) -> str:
        return _ask(
            backend,
            _tp_context(p, chunk) + [ChatMessage("user", p["sarg_tp_task"])],
            method=review.method_label,
            paper_id=paper.paper_id,
            group=f"chunk-{chunk.chunk_index}",
        )

    outputs = _per_chunk(chunks, generate, review, config)
    current = _merge(backend, p["sarg_tp_system"], outputs, review, p)
    for chunk in chunks:
        task = p.render("sarg_tp_refine", review_comments=format_numbered(current))
        try:
            text = _ask(
                backend,
                _tp_context(p, chunk) + [ChatMessage("user", task)],
                method=review.method_label,
                paper_id=paper.paper_id,
                group=f"refine-{chunk.chunk_index}",
            )
        except BackendError as exc:
            logger.warning("SARG-TP refinement on chunk %d failed: %s", chunk.chunk_index, exc)
            review.errors.append({"group": f"refine-{chunk.chunk_index}", "error": f"{type(exc).__name__}: {exc}"})
            continue
        current = parse_comment_list(text)
    review.comments = [ReviewComment(t, review.method_label, stage="refined") for t in current]
    return _finish(review, backend)


def lizca_review(paper: StructuredPaper, backend: Backend, config: BaselineConfig | None = None) -> Review:
    """Truncate the whole paper to fit one request, draft an outline review, pull out the criticisms."""
    config = config or BaselineConfig()
    p = config.prompts
    review = Review(paper.paper_id, "LiZCa")
    budget = config.truncation_budget
    if budget is None:
        budget = backend.input_limit - LIZCA_RESERVE
    if budget <= 0:
        raise ValueError(f"truncation budget must be positive, got {budget}")
    units = render_units(paper, include_captions=config.include_captions, counter=backend.counter)
    cut = truncate_rendering(units, budget)
    if cut.truncated:
        logger.info("LiZCa kept %d of %d units (%d tokens)", cut.units_kept, cut.units_total, cut.token_count)
    tags = dict(method=review.method_label, paper_id=paper.paper_id)
    system = ChatMessage("system", p["lizca_system"])
    try:
        outline = _ask(backend, [system, ChatMessage("user", p.render("lizca_outline", paper_text=cut.text))], group="outline", **tags)
        extracted = _ask(backend, [system, ChatMessage("user", p.render("lizca_criticism", outline=outline))], group="criticism", **tags)
    except BackendError as exc:
        logger.error("LiZCa failed for %s: %s", paper.paper_id or "paper", exc)
        review.errors.append({"group": "lizca", "error": f"{type(exc).__name__}: {exc}"})
        return _finish(review, backend)
    review.comments = [ReviewComment(t, review.method_label) for t in parse_comment_list(extracted)]
    return _finish(review, backend)
