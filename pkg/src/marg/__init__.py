"""Multi-agent review generation for long scientific papers, with baselines and alignment-based evaluation."""

from .backend import ChatMessage, CompletionRequest, HttpBackend, ScriptedBackend, ScriptedExchange
from .baselines import BaselineConfig, lizca_review, sarg_b_review, sarg_tp_review
from .comments import parse_comment_list
from .corpus import AnnotatedParagraph, PaperChunk, Section, StructuredPaper, annotate, chunk, chunk_paper, ingest, load_paper
from .errors import (
    BackendError,
    BackendRefusal,
    EmptyPaperError,
    GroupAbortedError,
    MargError,
    PromptTemplateError,
    SchemaError,
    TokenLimitError,
    TransportError,
)
from .group import AgentGroup, FinalAnswer, GroupConfig, GroupLimits, init_group, run_group
from .marg import PipelineOptions, generate_mini_review, marg_s_review, marg_tp_review, refine_comment
from .prompts import PromptBundle, load_bundle
from .protocol import parse_outgoing
from .review import Review, ReviewComment
from .tokens import count_tokens
from .transcript import GroupTranscript
from .usage import UsageLedger, usage_report

__version__ = "0.1.0"

__all__ = [
    "AgentGroup",
    "AnnotatedParagraph",
    "BackendError",
    "BackendRefusal",
    "BaselineConfig",
    "ChatMessage",
    "CompletionRequest",
    "EmptyPaperError",
    "FinalAnswer",
    "GroupAbortedError",
    "GroupConfig",
    "GroupLimits",
    "GroupTranscript",
    "HttpBackend",
    "MargError",
    "PaperChunk",
    "PipelineOptions",
    "PromptBundle",
    "PromptTemplateError",
    "Review",
    "ReviewComment",
    "SchemaError",
    "ScriptedBackend",
    "ScriptedExchange",
    "Section",
    "StructuredPaper",
    "TokenLimitError",
    "TransportError",
    "UsageLedger",
    "annotate",
    "chunk",
    "chunk_paper",
    "count_tokens",
    "generate_mini_review",
    "ingest",
    "init_group",
    "lizca_review",
    "load_bundle",
    "load_paper",
    "marg_s_review",
    "marg_tp_review",
    "parse_comment_list",
    "parse_outgoing",
    "refine_comment",
    "run_group",
    "sarg_b_review",
    "sarg_tp_review",
    "usage_report",
]
