"""Paper ingestion, paragraph annotation and token-budgeted chunking."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import EmptyPaperError, SchemaError
from .tokens import TokenCounter, count_tokens, token_spans

DEFAULT_CHUNK_BUDGET = 4096
MIN_CHUNK_BUDGET = 64

_WS_RE = re.compile(r"\s+")
_SENTENCE_END_RE = re.compile(r"[.!?][\"')\]]*\s+")


@dataclass(frozen=True)
class Section:
    name: str
    paragraphs: tuple[str, ...]
    captions: tuple[str, ...] = ()


@dataclass(frozen=True)
class StructuredPaper:
    title: str
    sections: tuple[Section, ...]
    paper_id: str = ""

    @property
    def num_paragraphs(self) -> int:
        return sum(len(s.paragraphs) for s in self.sections)


@dataclass(frozen=True)
class AnnotatedParagraph:
    global_index: int
    section_name: str
    body: str
    rendered: str
    token_count: int
    # (part, total) when this is a fragment of a hard-split paragraph
    fragment: tuple[int, int] | None = None


@dataclass(frozen=True)
class PaperChunk:
    chunk_index: int
    paragraphs: tuple[AnnotatedParagraph, ...]
    text: str
    token_count: int


def _normalize(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaError(msg)


def _string_list(value: Any, where: str) -> list[str]:
    _require(isinstance(value, list), f"{where} must be a list")
    for i, item in enumerate(value):
        _require(isinstance(item, str), f"{where}[{i}] must be a string")
    return value


def ingest(document: Mapping[str, Any] | str, *, paper_id: str | None = None) -> StructuredPaper:
    """Validate a structured-text document and normalize its whitespace.

    ``document`` is either the decoded JSON object or its JSON text. Blank
    paragraphs are dropped; sections keep their order.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    _require(isinstance(document, Mapping), "document must be a JSON object")
    title = document.get("title", "")
    _require(isinstance(title, str), "title must be a string")
    raw_sections = document.get("sections")
    _require(raw_sections is not None, "missing 'sections'")
    _require(isinstance(raw_sections, list), "sections must be a list")

    sections = []
    for i, raw in enumerate(raw_sections):
        where = f"sections[{i}]"
        _require(isinstance(raw, Mapping), f"{where} must be an object")
        name = raw.get("name")
        _require(isinstance(name, str) and name.strip() != "", f"{where}.name must be a non-empty string")
        paragraphs = _string_list(raw.get("paragraphs", []), f"{where}.paragraphs")
        captions = raw.get("captions")
        captions = [] if captions is None else _string_list(captions, f"{where}.captions")
        sections.append(
            Section(
                name=_normalize(name),
                paragraphs=tuple(p for p in map(_normalize, paragraphs) if p),
                captions=tuple(c for c in map(_normalize, captions) if c),
            )
        )

    paper = StructuredPaper(
        title=_normalize(title),
        sections=tuple(sections),
        paper_id=paper_id or str(document.get("paper_id") or document.get("id") or ""),
    )
    if paper.num_paragraphs == 0:
        raise EmptyPaperError("paper has no non-empty paragraphs")
    return paper


def load_paper(path: str | Path) -> StructuredPaper:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    paper = ingest(doc)
    if not paper.paper_id:
        paper = StructuredPaper(paper.title, paper.sections, path.stem)
    return paper


def paragraph_prefix(section_name: str, index: int) -> str:
    return f"[Section: {section_name}] Paragraph {index}: "


def render_paragraph(section_name: str, index: int, body: str) -> str:
    return paragraph_prefix(section_name, index) + body


def annotate(paper: StructuredPaper, counter: TokenCounter = count_tokens) -> list[AnnotatedParagraph]:
    out = []
    k = 0
    for section in paper.sections:
        for body in section.paragraphs:
            k += 1
            rendered = render_paragraph(section.name, k, body)
            out.append(AnnotatedParagraph(k, section.name, body, rendered, counter(rendered)))
    if not out:
        raise EmptyPaperError("paper has no paragraphs")
    return out


def _make_chunk(index: int, paragraphs: list[AnnotatedParagraph]) -> PaperChunk:
    return PaperChunk(
        chunk_index=index,
        paragraphs=tuple(paragraphs),
        text="\n\n".join(p.rendered for p in paragraphs),
        token_count=sum(p.token_count for p in paragraphs),
    )


def _longest_fitting_prefix(prefix: str, text: str, budget: int, counter: TokenCounter) -> int:
    """Character offset of the longest token-aligned prefix of ``text`` that fits."""
    ends = [end for _, end in token_spans(text)]
    lo, hi = 0, len(ends)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter(prefix + text[: ends[mid - 1]]) <= budget:
            lo = mid
        else:
            hi = mid - 1
    # always make progress, even if a single unit overflows
    cut = ends[max(lo, 1) - 1]
    # keep trailing whitespace with the earlier fragment
    while cut < len(text) and text[cut].isspace():
        cut += 1
    return cut


def split_oversize(
    para: AnnotatedParagraph, budget: int, counter: TokenCounter = count_tokens
) -> list[AnnotatedParagraph]:
    """Hard-split one paragraph into fragments whose rendering fits ``budget``.

    Cuts go at sentence ends first and at token boundaries inside a sentence
    that is too long on its own. Fragment bodies concatenate to ``para.body``.
    """
    prefix = paragraph_prefix(para.section_name, para.global_index)
    body = para.body
    bounds = [m.end() for m in _SENTENCE_END_RE.finditer(body)]
    sentences = []
    start = 0
    for end in bounds + [len(body)]:
        if end > start:
            sentences.append(body[start:end])
            start = end

    pieces: list[str] = []
    current = ""
    for sentence in sentences:
        if counter(prefix + current + sentence) <= budget:
            current += sentence
            continue
        if current:
            pieces.append(current)
            current = ""
        while counter(prefix + sentence) > budget:
            cut = _longest_fitting_prefix(prefix, sentence, budget, counter)
            pieces.append(sentence[:cut])
            sentence = sentence[cut:]
        current = sentence
    if current:
        pieces.append(current)

    total = len(pieces)
    return [
        AnnotatedParagraph(
            global_index=para.global_index,
            section_name=para.section_name,
            body=piece,
            rendered=prefix + piece,
            token_count=counter(prefix + piece),
            fragment=(i + 1, total),
        )
        for i, piece in enumerate(pieces)
    ]


def chunk(
    paragraphs: list[AnnotatedParagraph],
    budget: int = DEFAULT_CHUNK_BUDGET,
    counter: TokenCounter = count_tokens,
) -> list[PaperChunk]:
    """Greedy left-to-right packing of paragraphs into chunks of at most ``budget`` tokens."""
    if budget < MIN_CHUNK_BUDGET:
        raise ValueError(f"chunk budget must be >= {MIN_CHUNK_BUDGET}, got {budget}")
    chunks: list[PaperChunk] = []
    current: list[AnnotatedParagraph] = []
    used = 0

    def flush() -> None:
        nonlocal current, used
        if current:
            chunks.append(_make_chunk(len(chunks) + 1, current))
        current, used = [], 0

    for para in paragraphs:
        if para.token_count > budget:
            flush()
            for frag in split_oversize(para, budget, counter):
                chunks.append(_make_chunk(len(chunks) + 1, [frag]))
            continue
        if used + para.token_count > budget:
            flush()
        current.append(para)
        used += para.token_count
    flush()
    return chunks


def chunk_paper(
    paper: StructuredPaper, budget: int = DEFAULT_CHUNK_BUDGET, counter: TokenCounter = count_tokens
) -> list[PaperChunk]:
    return chunk(annotate(paper, counter), budget, counter)


@dataclass
class RenderUnit:
    text: str
    tokens: int
    kind: str = "paragraph"


def render_units(paper: StructuredPaper, *, include_captions: bool, counter: TokenCounter = count_tokens) -> list[RenderUnit]:
    """Title, annotated paragraphs and (optionally) per-section captions, in reading order."""
    units = []
    if paper.title:
        title = f"Title: {paper.title}"
        units.append(RenderUnit(title, counter(title), "title"))
    k = 0
    for section in paper.sections:
        for body in section.paragraphs:
            k += 1
            text = render_paragraph(section.name, k, body)
            units.append(RenderUnit(text, counter(text)))
        if include_captions:
            for j, caption in enumerate(section.captions, 1):
                text = f"[Section: {section.name}] Caption {j}: {caption}"
                units.append(RenderUnit(text, counter(text), "caption"))
    return units


@dataclass
class Truncation:
    text: str
    token_count: int
    units_kept: int
    units_total: int
    kinds: list[str] = field(default_factory=list)

    @property
    def truncated(self) -> bool:
        return self.units_kept < self.units_total


def truncate_rendering(units: list[RenderUnit], budget: int) -> Truncation:
    """Keep whole units from the front while the running total stays within ``budget``."""
    kept: list[RenderUnit] = []
    used = 0
    for unit in units:
        if used + unit.tokens > budget:
            break
        kept.append(unit)
        used += unit.tokens
    return Truncation(
        text="\n\n".join(u.text for u in kept),
        token_count=used,
        units_kept=len(kept),
        units_total=len(units),
        kinds=[u.kind for u in kept],
    )
