"""Client for OpenAI-compatible chat/completions backends, plus the
deterministic mock used throughout the test suite.

Wire protocol: chat goes to POST {base_url}/v1/chat/completions; token
scoring goes to POST {base_url}/v1/completions with echo + logprobs and the
returned scores sliced to the target suffix. Transport failures, timeouts,
and 5xx responses are retried with exponential backoff; HTTP 4xx is never
retried. The client sends message lists verbatim - no reordering, merging,
or truncation happens here.

Env vars: LLM_BASE_URL, LLM_MODEL, LLM_API_KEY (bearer header when set).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from .errors import (
    BackendError,
    BackendUnreachableError,
    CapabilityError,
    PromptError,
    ProtocolError,
)
from .evaluation import TokenScore
from .prompts import ChatMessage, ROLE_SYSTEM, first_feature_name

CHAT_PATH = "/v1/chat/completions"
COMPLETIONS_PATH = "/v1/completions"

_BACKOFF_INITIAL_SECONDS = 0.25


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model_name: str = "local-model"
    temperature: float = 0.2
    max_tokens: int = 512
    timeout_ms: int = 30_000
    retries: int = 2

    def __post_init__(self):
        if not self.base_url:
            raise BackendError("base_url must be non-empty")
        if self.timeout_ms <= 0:
            raise BackendError("timeout_ms must be positive")
        if self.temperature < 0:
            raise BackendError("temperature must be >= 0")
        if self.retries < 0:
            raise BackendError("retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides) -> "BackendConfig":
        values = dict(
            base_url=os.environ.get("LLM_BASE_URL", "http://127.0.0.1:8080"),
            model_name=os.environ.get("LLM_MODEL", "local-model"),
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str
    usage: tuple[int, int]  # (prompt_tokens, completion_tokens)

    def __post_init__(self):
        if self.finish_reason not in ("stop", "length", "error"):
            raise ProtocolError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason != "error" and not self.content:
            raise ProtocolError("response content missing")


class _TransportFailure(Exception):
    """Retryable: connection problems, timeouts, 5xx."""


class _HttpStatusError(Exception):
    """Non-retryable HTTP status (4xx)."""

    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class Transport(Protocol):
    def request(self, path: str, payload: dict) -> dict: ...

    def ping(self) -> bool: ...


class HttpTransport:
    """Thin httpx wrapper speaking to one backend base URL."""

    def __init__(self, config: BackendConfig, api_key: str | None = None):
        self.config = config
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.timeout_ms / 1000.0,
            headers=headers,
        )

    def request(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            raise _TransportFailure(str(exc)) from exc
        if response.status_code >= 500:
            raise _TransportFailure(f"HTTP {response.status_code}")
        if response.status_code >= 400:
            raise _HttpStatusError(response.status_code, response.text)
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise ProtocolError(
                f"backend returned non-JSON body: {response.text[:200]!r}"
            ) from exc

    def ping(self) -> bool:
        try:
            return self._client.get("/v1/models", timeout=2.0).status_code < 500
        except httpx.HTTPError:
            return False


class MockBackend:
    """Scripted stand-in for a real backend; fully deterministic.

    Modes:
      fixed_reply       - answer with the scripted reply (or cycle a list)
      echo_top_feature  - answer naming the first feature found in the
                          latest info-prompt-shaped message
      fail_after_n      - serve n requests, then fail transport forever

    Scoring tokenizes the target into characters, each at ``token_logprob``.
    """

    def __init__(
        self,
        mode: str = "fixed_reply",
        reply: str | Sequence[str] = "OK",
        fail_after: int = 0,
        token_logprob: float = -0.5,
    ):
        if mode not in ("fixed_reply", "echo_top_feature", "fail_after_n"):
            raise BackendError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.replies = [reply] if isinstance(reply, str) else list(reply)
        self.fail_after = fail_after
        self.token_logprob = token_logprob
        self.attempts = 0
        self.served = 0
        self.requests: list[tuple[str, dict]] = []

    def _next_reply(self) -> str:
        reply = self.replies[min(self.served, len(self.replies)) - 1]
        return reply

    def request(self, path: str, payload: dict) -> dict:
        self.attempts += 1
        if self.mode == "fail_after_n" and self.served >= self.fail_after:
            raise _TransportFailure("scripted transport failure")
        self.served += 1
        self.requests.append((path, payload))
        if path == CHAT_PATH:
            return self._chat(payload)
        if path == COMPLETIONS_PATH:
            return self._completions(payload)
        raise _HttpStatusError(404, f"no such endpoint {path}")

    def _chat(self, payload: dict) -> dict:
        if self.mode == "echo_top_feature":
            content = "I don't see an uploaded instance in this conversation yet."
            for message in reversed(payload.get("messages", [])):
                name = first_feature_name(message.get("content", ""))
                if name is not None:
                    content = (
                        f"The strongest driver of this prediction is {name}; "
                        "its attribution value leads the list you provided."
                    )
                    break
        else:
            content = self._next_reply()
        prompt_chars = sum(len(m.get("content", "")) for m in payload.get("messages", []))
        return {
            "choices": [
                {
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": prompt_chars,
                "completion_tokens": len(content),
            },
        }

    def _completions(self, payload: dict) -> dict:
        text = payload.get("prompt", "")
        tokens = list(text)
        offsets = list(range(len(tokens)))
        return {
            "choices": [
                {
                    "text": text,
                    "logprobs": {
                        "tokens": tokens,
                        "token_logprobs": [self.token_logprob] * len(tokens),
                        "text_offset": offsets,
                    },
                }
            ]
        }

    def ping(self) -> bool:
        return not (self.mode == "fail_after_n" and self.served >= self.fail_after)


def _excerpt(body: dict) -> str:
    return json.dumps(body)[:300]


def _request_with_retries(config: BackendConfig, transport: Transport, path: str, payload: dict) -> dict:
    last_failure: Exception | None = None
    for attempt in range(config.retries + 1):
        try:
            return transport.request(path, payload)
        except _TransportFailure as exc:
            last_failure = exc
            if attempt < config.retries:
                time.sleep(_BACKOFF_INITIAL_SECONDS * 2**attempt)
    raise BackendUnreachableError(
        f"backend unreachable after {config.retries + 1} attempts: {last_failure}"
    )


def chat_complete(
    config: BackendConfig,
    messages: Sequence[ChatMessage],
    transport: Transport | None = None,
) -> ChatResponse:
    """One chat round trip; messages are sent exactly as given."""
    if not messages:
        raise PromptError("message list must be non-empty")
    if messages[0].role != ROLE_SYSTEM:
        raise PromptError("first message must be system-role")
    if transport is None:
        transport = HttpTransport(config)
    payload = {
        "model": config.model_name,
        "messages": [m.to_json() for m in messages],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    try:
        body = _request_with_retries(config, transport, CHAT_PATH, payload)
    except _HttpStatusError as exc:
        raise BackendError(f"backend rejected the request: {exc}") from exc
    try:
        choice = body["choices"][0]
        content = choice["message"]["content"]
        finish_reason = choice.get("finish_reason", "stop")
        usage = body.get("usage", {})
        return ChatResponse(
            content=content,
            finish_reason=finish_reason,
            usage=(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            ),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(
            f"malformed chat response ({exc!r}): {_excerpt(body)}"
        ) from exc


def score_tokens(
    config: BackendConfig,
    prompt: str,
    target: str,
    transport: Transport | None = None,
) -> list[TokenScore]:
    """Token log-probabilities for ``target`` continued from ``prompt``.

    The backend scores prompt+target with echo; tokens whose text offset
    falls inside the prompt are dropped. Leading target tokens the backend
    could not score (null logprob) are skipped.
    """
    if not target:
        raise PromptError("target must be non-empty")
    if transport is None:
        transport = HttpTransport(config)
    payload = {
        "model": config.model_name,
        "prompt": prompt + target,
        "max_tokens": 0,
        "echo": True,
        "logprobs": True,
    }
    try:
        body = _request_with_retries(config, transport, COMPLETIONS_PATH, payload)
    except _HttpStatusError as exc:
        if exc.status == 404:
            raise CapabilityError(
                "backend has no completions endpoint with logprobs; use a "
                "scoring-capable backend (e.g. llama.cpp or vLLM)"
            ) from exc
        raise BackendError(f"backend rejected the request: {exc}") from exc
    try:
        choice = body["choices"][0]
        logprobs = choice.get("logprobs")
        if not logprobs:
            raise CapabilityError(
                "backend response carries no logprobs; use a scoring-capable "
                "backend (e.g. llama.cpp or vLLM)"
            )
        tokens = logprobs["tokens"]
        values = logprobs["token_logprobs"]
        offsets = logprobs["text_offset"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(
            f"malformed scoring response ({exc!r}): {_excerpt(body)}"
        ) from exc
    scores: list[TokenScore] = []
    for token, value, offset in zip(tokens, values, offsets):
        if offset < len(prompt):
            continue
        if value is None:
            if scores:
                raise ProtocolError(f"unscored token {token!r} inside the target")
            continue  # backends cannot score the very first context-free token
        scores.append(TokenScore(token_text=token, logprob=float(value)))
    if not scores:
        raise ProtocolError("backend returned no scored tokens for the target")
    return scores
