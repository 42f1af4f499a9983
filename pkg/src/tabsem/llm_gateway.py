"""Chat-completion backends: an OpenAI-compatible HTTP client and a scripted mock.

The mock backend replays a fixed list of responses, which makes every
pipeline stage a pure function of (inputs, script) and keeps the test suite
fully offline. The API key is read from the configured environment variable
at call time and is never stored on the config or written to any artifact.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import httpx

ROLES = ("system", "user", "assistant")


class GatewayError(Exception):
    """Base class for backend failures."""


class AuthError(GatewayError):
    """The endpoint rejected the credentials (401/403)."""


class RateLimited(GatewayError):
    """Still throttled (429) after exhausting retries."""


class TransportError(GatewayError):
    """Network failure or unexpected HTTP status."""


class ProtocolError(GatewayError):
    """The response body does not follow the chat-completions schema."""


class ScriptExhausted(GatewayError):
    """The mock script has no responses left."""


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: list[tuple[str, str]]  # (role, content)
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
        if self.messages[-1][0] != "user":
            raise ValueError("last message must have role 'user'")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be > 0")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"  # stop | length | error
    usage: tuple[int, int] = (0, 0)  # (prompt_tokens, completion_tokens)


class _MockScript:
    """Thread-safe playback cursor over a fixed response list."""

    def __init__(self, responses: list[str]) -> None:
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()

    def next(self) -> str:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise ScriptExhausted(
                    f"mock script exhausted after {len(self._responses)} responses"
                )
            response = self._responses[self._cursor]
            self._cursor += 1
            return response


@dataclass
class BackendConfig:
    backend_kind: str = "http"  # http | mock
    endpoint_url: str | None = None
    api_key_env: str = "TABSEM_API_KEY"
    timeout: float = 60.0
    retries: int = 2
    backoff_base: float = 0.25  # seconds; doubles per retry
    script: _MockScript | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.backend_kind not in ("http", "mock"):
            raise ValueError(f"unknown backend_kind {self.backend_kind!r}")
        if self.backend_kind == "http" and not self.endpoint_url:
            raise ValueError("http backend requires endpoint_url")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @property
    def name(self) -> str:
        return "mock" if self.backend_kind == "mock" else f"http:{self.endpoint_url}"


def mock_script(responses: list[str]) -> BackendConfig:
    """Backend whose complete() calls return the given strings in order."""
    if not responses:
        raise ValueError("mock script needs at least one response")
    return BackendConfig(backend_kind="mock", script=_MockScript(responses))


def complete(cfg: BackendConfig, req: ChatRequest) -> ChatResponse:
    """Run one chat completion against the configured backend.

    Transient failures (network errors, 5xx, 429) are retried up to
    cfg.retries times with exponential backoff; other 4xx never retry.
    """
    if cfg.backend_kind == "mock":
        return ChatResponse(content=cfg.script.next())

    url = cfg.endpoint_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(cfg.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    body = {
        "model": req.model,
        "messages": [{"role": role, "content": content} for role, content in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    }

    last_error: str = ""
    for attempt in range(cfg.retries + 1):
        if attempt:
            time.sleep(cfg.backoff_base * 2 ** (attempt - 1))
        try:
            response = httpx.post(url, json=body, headers=headers, timeout=cfg.timeout)
        except httpx.HTTPError as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            continue
        status = response.status_code
        if status in (401, 403):
            raise AuthError(f"HTTP {status} from {url}")
        if status == 429 or status >= 500:
            last_error = f"HTTP {status}"
            continue
        if status >= 400:
            raise TransportError(f"HTTP {status} from {url}")
        return _parse_completion(response)

    if last_error == "HTTP 429":
        raise RateLimited(f"still throttled after {cfg.retries + 1} attempts")
    raise TransportError(f"giving up after {cfg.retries + 1} attempts: {last_error}")


def _parse_completion(response: httpx.Response) -> ChatResponse:
    try:
        doc = response.json()
    except ValueError as exc:
        raise ProtocolError(f"response body is not JSON: {exc}") from exc
    try:
        choice = doc["choices"][0]
        content = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"response missing choices[0].message.content: {exc!r}") from exc
    if not isinstance(content, str):
        raise ProtocolError("message content is not a string")
    finish = choice.get("finish_reason", "stop")
    if finish not in ("stop", "length", "error"):
        finish = "stop"
    usage = doc.get("usage") or {}
    return ChatResponse(
        content=content,
        finish_reason=finish,
        usage=(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
    )
