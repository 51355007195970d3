"""Alignment-based evaluation of generated reviews against real ones."""

from .align import (
    AlignmentEdge,
    Candidate,
    CommentSet,
    Relatedness,
    Specificity,
    aggregate_votes,
    align,
    decide_match,
    detect_compliment,
    extract_comments,
    many_many_match,
    matched_edges,
    pairwise_score,
    parse_pairs,
    parse_pairwise,
)
from .metrics import (
    HumanPaper,
    MacroReport,
    MetricsReport,
    ScoredComparison,
    SweepGrid,
    compute_metrics,
    directional_counts,
    human_baseline,
    leave_one_out,
    macro_average,
    threshold_sweep,
)

__all__ = [
    "AlignmentEdge",
    "Candidate",
    "CommentSet",
    "HumanPaper",
    "MacroReport",
    "MetricsReport",
    "Relatedness",
    "ScoredComparison",
    "Specificity",
    "SweepGrid",
    "aggregate_votes",
    "align",
    "compute_metrics",
    "decide_match",
    "detect_compliment",
    "directional_counts",
    "extract_comments",
    "human_baseline",
    "leave_one_out",
    "macro_average",
    "many_many_match",
    "matched_edges",
    "pairwise_score",
    "parse_pairs",
    "parse_pairwise",
    "threshold_sweep",
]
