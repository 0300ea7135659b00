"""Client for OpenAI-compatible chat-completions endpoints.

The thinking toggle is model-family specific, so two mechanisms are offered:

* ``extension_field``: a boolean set at a dotted path in the request body,
  e.g. ``chat_template_kwargs.enable_thinking``;
* ``system_directive``: a short string such as ``/think`` or ``/no_think``
  placed in the system message.

Timeouts, connection errors, 429 and 5xx responses are retried with
exponential backoff. Any other 4xx is fatal.
"""

from __future__ import annotations

import math
import os
import threading
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Mapping

import httpx

from .base import (
    FatalBackendError,
    GenerationOutcome,
    GenerationRequest,
    RetryableBackendError,
)

# whitespace-token estimate for servers that omit usage
TOKENS_PER_WORD = 1.3


class ApproximateTokenCountWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str | None = None
    mode_toggle: Literal["extension_field", "system_directive"] = "extension_field"
    extension_field: str = "chat_template_kwargs.enable_thinking"
    think_directive: str = "/think"
    nothink_directive: str = "/no_think"
    trace_role: Literal["assistant", "user"] = "user"
    trace_template: str = "Here is a partial line of reasoning:\n{trace}\n\nState only the final answer."
    hint_template: str = "A previous attempt gave the answer {hint}."
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_max: float = 16.0
    max_in_flight: int = 8
    temperature: float | None = None
    extra_body: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode_toggle not in ("extension_field", "system_directive"):
            raise ValueError(f"unknown mode_toggle {self.mode_toggle!r}")
        if self.trace_role not in ("assistant", "user"):
            raise ValueError(f"unknown trace_role {self.trace_role!r}")
        if self.max_retries < 0 or self.max_in_flight < 1:
            raise ValueError("max_retries must be >= 0 and max_in_flight >= 1")

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"

    def api_key(self) -> str | None:
        if not self.api_key_env:
            return None
        return os.environ.get(self.api_key_env)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extra_body"] = dict(self.extra_body)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EndpointConfig":
        return cls(**d)


def _set_path(body: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = body
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def build_payload(request: GenerationRequest, cfg: EndpointConfig) -> dict:
    system_parts = []
    if request.system:
        system_parts.append(request.system)
    if cfg.mode_toggle == "system_directive":
        system_parts.append(cfg.think_directive if request.mode == "think" else cfg.nothink_directive)

    question = request.question
    if request.hint is not None:
        question = cfg.hint_template.format(hint=request.hint) + "\n\n" + question

    messages = []
    if system_parts:
        messages.append({"role": "system", "content": "\n".join(system_parts)})
    messages.append({"role": "user", "content": question})
    if request.trace is not None:
        if cfg.trace_role == "assistant":
            messages.append({"role": "assistant", "content": request.trace})
            messages.append({"role": "user", "content": cfg.trace_template.format(trace="(see above)")})
        else:
            messages.append({"role": "user", "content": cfg.trace_template.format(trace=request.trace)})

    body: dict = {
        "model": cfg.model,
        "messages": messages,
        "max_tokens": request.max_new_tokens,
        "seed": request.seed,
    }
    if cfg.temperature is not None:
        body["temperature"] = cfg.temperature
    for k, v in cfg.extra_body.items():
        body[k] = v
    if cfg.mode_toggle == "extension_field":
        _set_path(body, cfg.extension_field, request.mode == "think")
    return body


def parse_response(data: Mapping, request: GenerationRequest, retries: int = 0) -> GenerationOutcome:
    try:
        choice = data["choices"][0]
        text = choice["message"].get("content") or ""
        finish = choice.get("finish_reason")
    except (KeyError, IndexError, TypeError, AttributeError) as exc:
        raise FatalBackendError(f"malformed completion payload: {exc!r}") from exc

    cap = request.max_new_tokens
    usage = data.get("usage") or {}
    approx = "completion_tokens" not in usage
    if approx:
        tokens = math.ceil(len(text.split()) * TOKENS_PER_WORD)
        warnings.warn(
            "response has no usage block; token count estimated from whitespace",
            ApproximateTokenCountWarning,
            stacklevel=3,
        )
    else:
        tokens = int(usage["completion_tokens"])

    if finish == "length" or tokens >= cap:
        stop, tokens = "budget_hit", cap
    else:
        stop = "natural"
    return GenerationOutcome(
        text=text,
        tokens_generated=tokens,
        prefill_tokens=request.trace_tokens,
        stop_reason=stop,
        retries=retries,
        approximate_tokens=approx,
    )


class RemoteBackend:
    """Thread-safe chat-completions backend with a bound on in-flight requests."""

    def __init__(
        self,
        config: EndpointConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.max_in_flight = config.max_in_flight
        self._client = client or httpx.Client(timeout=config.timeout)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak_in_flight = 0

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        key = self.config.api_key()
        if key:
            h["Authorization"] = f"Bearer {key}"
        return h

    def _backoff(self, attempt: int) -> float:
        return min(self.config.backoff_max, self.config.backoff_base * 2**attempt)

    def generate(self, request: GenerationRequest) -> GenerationOutcome:
        payload = build_payload(request, self.config)
        qid = request.question_id
        last_error = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self._backoff(attempt - 1))
            with self._slots:
                with self._lock:
                    self.in_flight += 1
                    self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
                try:
                    resp = self._client.post(
                        self.config.url, json=payload, headers=self._headers(), timeout=self.config.timeout
                    )
                except httpx.TimeoutException as exc:
                    last_error = f"timeout: {exc}"
                    continue
                except httpx.TransportError as exc:
                    last_error = f"transport error: {exc}"
                    continue
                finally:
                    with self._lock:
                        self.in_flight -= 1
            status = resp.status_code
            if status == 429 or status >= 500:
                last_error = f"HTTP {status}"
                continue
            if status >= 400:
                raise FatalBackendError(f"HTTP {status}: {resp.text[:200]}", qid, attempt)
            try:
                data = resp.json()
            except ValueError as exc:
                raise FatalBackendError(f"response is not JSON: {exc}", qid, attempt) from exc
            out = parse_response(data, request, retries=attempt)
            out.check_against(request)
            return out
        raise RetryableBackendError(
            f"gave up after {self.config.max_retries + 1} attempts ({last_error})", qid, self.config.max_retries
        )


def remote_generate(request: GenerationRequest, endpoint_config: EndpointConfig, client: httpx.Client | None = None) -> GenerationOutcome:
    backend = RemoteBackend(endpoint_config, client=client)
    try:
        return backend.generate(request)
    finally:
        if client is None:
            backend.close()
