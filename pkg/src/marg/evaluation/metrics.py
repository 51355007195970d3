"""Directional-intersection metrics, macro-averaging, human baseline and threshold sweeps."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from ..errors import EmptyInputError
from .align import AlignmentEdge, CommentSet, Relatedness, Specificity, matched_edges

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    recall: float
    precision: float
    jaccard: float
    n_gen: int
    n_real: int
    n_left_aligned: int
    n_right_aligned: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MacroReport:
    recall: float
    precision: float
    jaccard: float
    n_reports: int
    # comment counts averaged over (generated, real) report pairs
    mean_n_gen: float
    mean_n_real: float
    # averaged per paper instead, when paper ids were given
    mean_n_gen_per_paper: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def directional_counts(edges: Iterable[AlignmentEdge], n_gen: int, n_real: int) -> tuple[int, int]:
    """Number of generated comments with any edge, and of real comments with any edge."""
    left: set[int] = set()
    right: set[int] = set()
    for e in edges:
        if not (0 <= e.gen_index < n_gen):
            raise IndexError(f"gen_index {e.gen_index} out of range for {n_gen} generated comments")
        if not (0 <= e.real_index < n_real):
            raise IndexError(f"real_index {e.real_index} out of range for {n_real} real comments")
        left.add(e.gen_index)
        right.add(e.real_index)
    return len(left), len(right)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(edges: Iterable[AlignmentEdge], n_gen: int, n_real: int) -> MetricsReport:
    """Recall, precision and pseudo-Jaccard from matched edges; empty denominators give 0."""
    left, right = directional_counts(edges, n_gen, n_real)
    intersection = (left + right) / 2
    return MetricsReport(
        recall=_ratio(right, n_real),
        precision=_ratio(left, n_gen),
        jaccard=_ratio(intersection, n_gen + n_real - intersection),
        n_gen=n_gen,
        n_real=n_real,
        n_left_aligned=left,
        n_right_aligned=right,
    )


def macro_average(reports: Sequence[MetricsReport], paper_ids: Sequence[str] | None = None) -> MacroReport:
    """Unweighted mean over all (generated review, real review) reports."""
    if not reports:
        raise EmptyInputError("macro_average needs at least one report")
    n = len(reports)
    per_paper = None
    if paper_ids is not None:
        if len(paper_ids) != n:
            raise ValueError("paper_ids must align with reports")
        first: dict[str, int] = {}
        for pid, r in zip(paper_ids, reports):
            first.setdefault(pid, r.n_gen)
        per_paper = sum(first.values()) / len(first)
    return MacroReport(
        recall=sum(r.recall for r in reports) / n,
        precision=sum(r.precision for r in reports) / n,
        jaccard=sum(r.jaccard for r in reports) / n,
        n_reports=n,
        mean_n_gen=sum(r.n_gen for r in reports) / n,
        mean_n_real=sum(r.n_real for r in reports) / n,
        mean_n_gen_per_paper=per_paper,
    )


@dataclass
class ScoredComparison:
    """Pairwise-scored edges between one generated and one real comment set."""

    edges: list[AlignmentEdge]
    n_gen: int
    n_real: int
    paper_id: str = ""
    method_label: str = ""
    review_id: str = ""

    def metrics(
        self, min_r: Relatedness = Relatedness.MEDIUM, min_s: Specificity = Specificity.SAME
    ) -> MetricsReport:
        return compute_metrics(matched_edges(self.edges, min_r, min_s), self.n_gen, self.n_real)


@dataclass
class HumanPaper:
    """All real reviews of one paper plus scored edges for ordered review pairs.

    ``scored[(i, k)]`` holds edges with review ``i`` in the generated slot
    and review ``k`` in the real slot.
    """

    reviews: list[CommentSet]
    scored: Mapping[tuple[int, int], list[AlignmentEdge]] = field(default_factory=dict)
    paper_id: str = ""


def leave_one_out(paper: HumanPaper, i: int) -> ScoredComparison:
    """Review ``i`` against the pooled comments of every other review of the paper."""
    edges = []
    offset = 0
    for k, other in enumerate(paper.reviews):
        if k == i:
            continue
        for e in paper.scored.get((i, k), []):
            edges.append(AlignmentEdge(e.gen_index, offset + e.real_index, e.relatedness, e.specificity, e.votes))
        offset += len(other)
    return ScoredComparison(edges, len(paper.reviews[i]), offset, paper.paper_id, "human", paper.reviews[i].review_id)


def human_baseline(
    papers: Sequence[HumanPaper],
    min_r: Relatedness = Relatedness.MEDIUM,
    min_s: Specificity = Specificity.SAME,
) -> MacroReport:
    """Each real review scored as if generated against the other reviews of its paper, macro-averaged."""
    reports = []
    for paper in papers:
        if len(paper.reviews) < 2:
            logger.info("human baseline: skipping %s with %d review(s)", paper.paper_id or "paper", len(paper.reviews))
            continue
        for i in range(len(paper.reviews)):
            reports.append(leave_one_out(paper, i).metrics(min_r, min_s))
    if not reports:
        raise EmptyInputError("no paper has two or more real reviews")
    return macro_average(reports)


@dataclass
class SweepGrid:
    """Macro-averaged metrics for every (min relatedness, min specificity) cutoff."""

    cells: dict[tuple[Relatedness, Specificity], MacroReport]

    def recall(self, r: Relatedness, s: Specificity) -> float:
        return self.cells[(r, s)].recall

    def to_dict(self) -> dict:
        return {
            "rows": [r.label for r in Relatedness],
            "cols": [s.label for s in Specificity],
            "recall": [[self.cells[(r, s)].recall for s in Specificity] for r in Relatedness],
            "precision": [[self.cells[(r, s)].precision for s in Specificity] for r in Relatedness],
            "jaccard": [[self.cells[(r, s)].jaccard for s in Specificity] for r in Relatedness],
        }

    def to_csv(self, metric: str = "recall") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["min_relatedness"] + [s.label for s in Specificity])
        for r in Relatedness:
            writer.writerow([r.label] + [f"{getattr(self.cells[(r, s)], metric):.6f}" for s in Specificity])
        return buf.getvalue()


def threshold_sweep(comparisons: Sequence[ScoredComparison]) -> SweepGrid:
    """Re-threshold already-scored pairs at every cutoff; no new model calls."""
    if not comparisons:
        raise EmptyInputError("threshold_sweep needs at least one comparison")
    cells = {}
    for r in Relatedness:
        for s in Specificity:
            cells[(r, s)] = macro_average([c.metrics(r, s) for c in comparisons])
    return SweepGrid(cells)
