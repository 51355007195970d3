"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MargError(Exception):
    """Base class for all package errors."""


class SchemaError(MargError):
    """Input document does not match the expected JSON schema."""


class EmptyPaperError(MargError):
    """Paper has no paragraphs left after normalization."""


class PromptTemplateError(MargError):
    """A prompt template is missing a required placeholder or has an unresolved one."""


class BackendError(MargError):
    """Base class for chat-completion failures."""


class TokenLimitError(BackendError):
    """Request exceeds the backend input token limit."""

    def __init__(self, message: str, *, tokens: int | None = None, limit: int | None = None):
        super().__init__(message)
        self.tokens = tokens
        self.limit = limit


class TransportError(BackendError):
    """Network failure that persisted through all retries."""


class BackendRefusal(BackendError):
    """Non-retryable API error."""


class UnmatchedRequestError(BackendRefusal):
    """Strict scripted backend received a request no exchange matches."""


class GroupAbortedError(MargError):
    """A multi-agent group stopped before producing a final answer."""

    def __init__(self, message: str, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class EmptyInputError(MargError, ValueError):
    """Aggregation over an empty collection."""


class EmptyReviewWarning(UserWarning):
    """A generator produced no comments."""
