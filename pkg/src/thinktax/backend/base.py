"""Backend contract shared by the simulator and the remote client."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Protocol, runtime_checkable

Mode = Literal["think", "nothink"]
StopReason = Literal["natural", "budget_hit"]
MODES = ("think", "nothink")


@dataclass(frozen=True)
class GenerationRequest:
    """One generation call.

    ``trace`` is a reasoning trace handed to an answer-extraction pass and is
    only allowed in nothink mode. ``trace_tokens`` is its token count, billed
    as prefill. ``hint`` carries a previous round's answer.
    """

    question_id: str
    question: str
    mode: Mode
    max_new_tokens: int
    seed: int = 0
    system: str | None = None
    trace: str | None = None
    trace_tokens: int = 0
    hint: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.trace is not None and self.mode != "nothink":
            raise ValueError("reasoning-trace context is only allowed in nothink mode")
        if self.trace_tokens < 0:
            raise ValueError("trace_tokens must be >= 0")

    @property
    def prompt_parts(self) -> tuple[tuple[str, str], ...]:
        parts = []
        if self.system:
            parts.append(("system", self.system))
        parts.append(("question", self.question))
        if self.trace is not None:
            parts.append(("trace", self.trace))
        if self.hint is not None:
            parts.append(("hint", self.hint))
        return tuple(parts)


@dataclass(frozen=True)
class GenerationOutcome:
    text: str
    tokens_generated: int
    prefill_tokens: int
    stop_reason: StopReason
    correct_latent: bool | None = field(default=None, compare=False)
    retries: int = 0
    approximate_tokens: bool = False

    def __post_init__(self) -> None:
        if self.stop_reason not in ("natural", "budget_hit"):
            raise ValueError(f"bad stop_reason {self.stop_reason!r}")
        if self.tokens_generated < 0 or self.prefill_tokens < 0:
            raise ValueError("token counts must be nonnegative")

    def check_against(self, request: GenerationRequest) -> None:
        if self.tokens_generated > request.max_new_tokens:
            raise ValueError(
                f"outcome used {self.tokens_generated} tokens, cap was {request.max_new_tokens}"
            )
        if self.stop_reason == "budget_hit" and self.tokens_generated != request.max_new_tokens:
            raise ValueError("budget_hit outcomes must use exactly max_new_tokens")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "tokens_generated": self.tokens_generated,
            "prefill_tokens": self.prefill_tokens,
            "stop_reason": self.stop_reason,
            "retries": self.retries,
            "approximate_tokens": self.approximate_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationOutcome":
        return cls(
            text=d["text"],
            tokens_generated=d["tokens_generated"],
            prefill_tokens=d["prefill_tokens"],
            stop_reason=d["stop_reason"],
            retries=d.get("retries", 0),
            approximate_tokens=d.get("approximate_tokens", False),
        )


class BackendError(Exception):
    retryable = False

    def __init__(self, message: str, question_id: str | None = None, retries: int = 0):
        super().__init__(message)
        self.question_id = question_id
        self.retries = retries

    def with_question(self, question_id: str) -> "BackendError":
        if self.question_id is None:
            self.question_id = question_id
        return self

    def __str__(self) -> str:
        base = super().__str__()
        return f"[{self.question_id}] {base}" if self.question_id is not None else base


class RetryableBackendError(BackendError):
    """Transport trouble that outlasted the retry budget (timeouts, 5xx, 429)."""

    retryable = True


class FatalBackendError(BackendError):
    """Protocol or request error that retrying cannot fix (4xx, bad payload)."""


@runtime_checkable
class Backend(Protocol):
    max_in_flight: int

    def generate(self, request: GenerationRequest) -> GenerationOutcome: ...
