"""Chat-completion backends: a live HTTP client and a deterministic scripted one."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .errors import (
    BackendError,
    BackendRefusal,
    TokenLimitError,
    TransportError,
    UnmatchedRequestError,
)
from .tokens import TokenCounter, count_tokens
from .usage import UsageEntry, UsageLedger

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
DEFAULT_MODEL_ID = "gpt-4-0613"
DEFAULT_INPUT_LIMIT = 8192
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"

# chat-format framing overhead, as counted for gpt-4-0613
TOKENS_PER_MESSAGE = 3
TOKENS_PER_REPLY = 3


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str
    # local bookkeeping, never sent over the wire
    kind: str = field(default="", compare=False)
    round: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    def to_wire(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class Sampling:
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    sampling: Sampling = Sampling()
    # routing/accounting labels: method, paper_id, group, agent
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.messages[0].role != "system":
            raise ValueError("first message must have role 'system'")

    @property
    def agent(self) -> str:
        return self.tags.get("agent", "")

    @property
    def group(self) -> str:
        return self.tags.get("group", "")


def request_tokens(messages: Sequence[ChatMessage], counter: TokenCounter = count_tokens) -> int:
    return sum(counter(m.content) + TOKENS_PER_MESSAGE for m in messages) + TOKENS_PER_REPLY


class Backend:
    """Shared request validation, token-limit check, concurrency cap and usage accounting.

    Subclasses implement ``_generate`` and return ``(text, input_tokens, generated_tokens)``;
    token counts may be ``None`` to fall back to the local counter.
    """

    def __init__(
        self,
        *,
        input_limit: int = DEFAULT_INPUT_LIMIT,
        counter: TokenCounter = count_tokens,
        ledger: UsageLedger | None = None,
        concurrency_limit: int = 4,
        model_id: str = DEFAULT_MODEL_ID,
    ) -> None:
        if concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        self.input_limit = input_limit
        self.counter = counter
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.model_id = model_id
        self.concurrency_limit = concurrency_limit
        self._slots = threading.BoundedSemaphore(concurrency_limit)

    def request_tokens(self, request: CompletionRequest) -> int:
        return request_tokens(request.messages, self.counter)

    def complete(self, request: CompletionRequest) -> ChatMessage:
        n_in = self.request_tokens(request)
        if n_in > self.input_limit:
            raise TokenLimitError(
                f"request of {n_in} tokens exceeds input limit {self.input_limit}"
                f" (agent={request.agent or '-'}, group={request.group or '-'})",
                tokens=n_in,
                limit=self.input_limit,
            )
        with self._slots:
            text, used_in, used_out = self._generate(request)
        self.ledger.record(
            UsageEntry(
                method_label=request.tags.get("method", ""),
                input_tokens=n_in if used_in is None else used_in,
                generated_tokens=self.counter(text) if used_out is None else used_out,
                paper_id=request.tags.get("paper_id", ""),
                group=request.group,
                agent=request.agent,
            )
        )
        return ChatMessage("assistant", text)

    def _generate(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        raise NotImplementedError


# ---------------------------------------------------------------- scripted

_ERRORS = {
    "token_limit": TokenLimitError,
    "transport": TransportError,
    "refusal": BackendRefusal,
}


@dataclass
class ScriptedExchange:
    """One scripted reply and the conditions under which it fires.

    All given conditions must hold. ``contains`` is tested against the last
    message, ``any_contains`` against every message. An exchange with
    ``max_uses`` stops matching once used up, which is how a script walks an
    agent through a sequence of turns.
    """

    reply: str = ""
    agent: str | None = None
    group: str | None = None
    method: str | None = None
    contains: str | None = None
    any_contains: str | None = None
    max_uses: int | None = None
    error: str | None = None
    uses: int = 0

    def __post_init__(self) -> None:
        if self.error is not None and self.error not in _ERRORS:
            raise ValueError(f"unknown scripted error {self.error!r}")

    def matches(self, request: CompletionRequest) -> bool:
        if self.max_uses is not None and self.uses >= self.max_uses:
            return False
        if self.agent is not None and request.agent != self.agent:
            return False
        if self.group is not None and request.group != self.group:
            return False
        if self.method is not None and request.tags.get("method", "") != self.method:
            return False
        if self.contains is not None and self.contains not in request.messages[-1].content:
            return False
        if self.any_contains is not None and not any(self.any_contains in m.content for m in request.messages):
            return False
        return True

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {}
        for key in ("agent", "group", "method", "contains", "any_contains", "max_uses", "error"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        d["reply"] = self.reply
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScriptedExchange":
        allowed = {"reply", "agent", "group", "method", "contains", "any_contains", "max_uses", "error"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown exchange keys: {sorted(unknown)}")
        return cls(**{k: d[k] for k in d})


def load_script(path: str | Path) -> tuple[list[ScriptedExchange], dict[str, Any]]:
    """Read a script file. Returns the exchanges and the top-level options."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        data = {"exchanges": data}
    exchanges = [ScriptedExchange.from_dict(e) for e in data.get("exchanges", [])]
    options = {k: v for k, v in data.items() if k in ("strict", "default_reply")}
    return exchanges, options


def dump_script(exchanges: Sequence[ScriptedExchange], path: str | Path, *, strict: bool = True) -> None:
    payload = {"schema_version": 1, "strict": strict, "exchanges": [e.to_dict() for e in exchanges]}
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


Responder = Callable[[CompletionRequest], "str | None"]


class ScriptedBackend(Backend):
    """Replies from an ordered script; first matching exchange wins.

    ``responder`` is consulted when no exchange matches, before the strict/default
    fallback. Matching is serialized so concurrent callers see a deterministic order.
    """

    def __init__(
        self,
        exchanges: Sequence[ScriptedExchange | Mapping[str, Any]] = (),
        *,
        strict: bool = True,
        default_reply: str = "",
        responder: Responder | None = None,
        **kwargs: Any,
    ) -> None:
        super().__init__(**kwargs)
        self.exchanges = [e if isinstance(e, ScriptedExchange) else ScriptedExchange.from_dict(e) for e in exchanges]
        self.strict = strict
        self.default_reply = default_reply
        self.responder = responder
        self._match_lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, **kwargs: Any) -> "ScriptedBackend":
        exchanges, options = load_script(path)
        options.update(kwargs)
        return cls(exchanges, **options)

    def _select(self, request: CompletionRequest) -> ScriptedExchange | None:
        with self._match_lock:
            for exchange in self.exchanges:
                if exchange.matches(request):
                    exchange.uses += 1
                    return exchange
        return None

    def _generate(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        exchange = self._select(request)
        if exchange is not None:
            if exchange.error:
                raise _ERRORS[exchange.error](
                    f"scripted {exchange.error} for agent={request.agent or '-'} group={request.group or '-'}"
                )
            return exchange.reply, None, None
        if self.responder is not None:
            text = self.responder(request)
            if text is not None:
                return text, None, None
        if self.strict:
            last = request.messages[-1].content
            raise UnmatchedRequestError(
                f"no scripted exchange for agent={request.agent or '-'} group={request.group or '-'}"
                f" last message={last[:80]!r}"
            )
        return self.default_reply, None, None


# ---------------------------------------------------------------- live HTTP

_CONTEXT_LENGTH_RE = re.compile(r"context.length|maximum context|too many tokens", re.I)


class HttpBackend(Backend):
    """OpenAI-compatible chat-completions client.

    Transport failures, 429 and 5xx responses are retried with exponential
    backoff; other 4xx responses are refusals and are not retried.
    """

    def __init__(
        self,
        *,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        sampling: Sampling = Sampling(),
        max_retries: int = 3,
        backoff_seconds: float = 1.0,
        timeout: float = 600.0,
        transport: Any = None,
        sleep: Callable[[float], None] = time.sleep,
        **kwargs: Any,
    ) -> None:
        import httpx

        super().__init__(**kwargs)
        api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        if not api_key:
            raise BackendRefusal(f"no API key: set ${api_key_env}")
        self.sampling = sampling
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._sleep = sleep
        self._httpx = httpx
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _payload(self, request: CompletionRequest) -> dict[str, Any]:
        return {
            "model": request.model_id,
            "messages": [m.to_wire() for m in request.messages],
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_output_tokens,
        }

    def _generate(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        payload = self._payload(request)
        attempt = 0
        while True:
            try:
                resp = self._client.post("/chat/completions", json=payload)
            except self._httpx.TransportError as exc:
                failure: str = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    return self._parse(resp)
                if resp.status_code != 429 and resp.status_code < 500:
                    body = resp.text
                    if _CONTEXT_LENGTH_RE.search(body):
                        raise TokenLimitError(f"backend rejected request size: {body[:300]}")
                    raise BackendRefusal(f"HTTP {resp.status_code}: {body[:300]}")
                failure = f"HTTP {resp.status_code}"
            if attempt >= self.max_retries:
                raise TransportError(f"giving up after {attempt + 1} attempts: {failure}")
            delay = self.backoff_seconds * (2**attempt) * (1 + 0.1 * random.random())
            logger.warning("chat completion failed (%s); retry %d in %.1fs", failure, attempt + 1, delay)
            self._sleep(delay)
            attempt += 1

    @staticmethod
    def _parse(resp: Any) -> tuple[str, int | None, int | None]:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendRefusal(f"malformed completion response: {exc}") from exc
        usage = data.get("usage") or {}
        return text, usage.get("prompt_tokens"), usage.get("completion_tokens")


def make_backend(kind: str, **kwargs: Any) -> Backend:
    if kind == "scripted":
        script = kwargs.pop("script", None)
        if not script:
            raise BackendError("scripted backend requires a script path")
        return ScriptedBackend.from_file(script, **kwargs)
    if kind == "live":
        kwargs.pop("script", None)
        return HttpBackend(**kwargs)
    raise BackendError(f"unknown backend {kind!r}")
