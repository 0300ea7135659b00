"""Answer extraction, normalization and natural-stop detection.

Extraction walks a fixed ladder of patterns and stops at the first level that
yields a value:

1. the last ``\\boxed{...}`` directive (balanced-brace scan),
2. the last ``####`` marker (GSM8K convention),
3. the last "Final answer" phrase,
4. the last number in the text.

Truncated model output is the common case, so the boxed scanner accepts a
directive whose own opening brace is still unclosed at end-of-text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

Method = Literal["boxed", "gsm8k_marker", "final_answer_phrase", "last_number", "none"]
Convention = Literal["numeric", "latex_math"]

METHODS: tuple[str, ...] = ("boxed", "gsm8k_marker", "final_answer_phrase", "last_number", "none")
FALLBACK_METHODS = frozenset({"last_number", "none"})

DEFAULT_STRICT_THRESHOLD = 0.95
DECIMAL_REL_TOL = 1e-9

_BOXED = re.compile(r"\\boxed\s*\{")
_GSM8K_MARKER = re.compile(r"####")
_FINAL_PHRASE = re.compile(r"final\s+answer\s*(?:is\b)?\s*:?", re.IGNORECASE)

# signed decimal, optional thousands separators; no scientific notation
_NUMBER = r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?"
_NUMBER_RE = re.compile(r"(?<![\w.])" + _NUMBER)
_LEADING_NUMBER = re.compile(r"^(?:[$€£¥]\s*)?(?P<num>" + _NUMBER + r")(?![\w/])")
_MATH_DELIMS = (("$$", "$$"), ("$", "$"), ("\\(", "\\)"), ("\\[", "\\]"))

_SPACING_CMD = re.compile(r"\\(?:[,;:! ]|q?quad(?![A-Za-z]))|~")
_GROUPED_NUMBER = re.compile(r"^[-+]?\d{1,3}(?:,\d{3})+(?:\.\d+)?$")
_PLAIN_FRACTION = re.compile(r"^([-+]?\d+)\s*/\s*([-+]?\d+)$")
_LATEX_FRACTION = re.compile(r"^([-+]?)\\[dt]?frac\{\s*([-+]?\d+)\s*\}\{\s*([-+]?\d+)\s*\}$")
_INTEGER = re.compile(r"^[-+]?\d+$")
_DECIMAL = re.compile(r"^[-+]?(?:\d+\.\d*|\.\d+)$")


@dataclass(frozen=True)
class ExtractedAnswer:
    value: str | None
    raw_span: str | None
    method: Method

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown extraction method {self.method!r}")
        if (self.method == "none") != (self.value is None):
            raise ValueError("method 'none' must coincide with an absent value")

    @property
    def found(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        return {"value": self.value, "raw_span": self.raw_span, "method": self.method}

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractedAnswer":
        return cls(value=d["value"], raw_span=d["raw_span"], method=d["method"])


NO_ANSWER = ExtractedAnswer(value=None, raw_span=None, method="none")


@dataclass(frozen=True)
class StopSignal:
    tokens_generated: int
    budget: int
    stop_reason: Literal["natural", "budget_hit"]
    strict: bool
    has_final_marker: bool = False
    strict_threshold: float = DEFAULT_STRICT_THRESHOLD

    @property
    def natural(self) -> bool:
        return self.stop_reason == "natural"

    def to_dict(self) -> dict:
        return {
            "tokens_generated": self.tokens_generated,
            "budget": self.budget,
            "stop_reason": self.stop_reason,
            "strict": self.strict,
            "has_final_marker": self.has_final_marker,
            "strict_threshold": self.strict_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StopSignal":
        return cls(**d)


def _boxed_span(text: str) -> str | None:
    """Content of the last ``\\boxed{`` directive, or None if it is malformed."""
    matches = list(_BOXED.finditer(text))
    if not matches:
        return None
    start = matches[-1].end()
    depth = 1
    i = start
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n and text[i + 1] in "{}":
            i += 2
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start:i].strip() or None
        i += 1
    # truncated inside the directive: only the directive's own brace may be open
    if depth == 1:
        return text[start:].strip() or None
    return None


def _strip_math_delims(span: str) -> str:
    for left, right in _MATH_DELIMS:
        if span.startswith(left) and span.endswith(right) and len(span) >= len(left) + len(right):
            return span[len(left) : len(span) - len(right)].strip()
    return span


def _value_after(text: str, pos: int, convention: Convention) -> str | None:
    span = text[pos:].split("\n", 1)[0].strip()
    span = _strip_math_delims(span.rstrip(".").strip())
    if not span:
        return None
    if convention == "numeric":
        m = _LEADING_NUMBER.match(span)
        if m:
            return m.group("num")
    return span


def _last_marker_value(pattern: re.Pattern, text: str, convention: Convention) -> str | None:
    for m in reversed(list(pattern.finditer(text))):
        value = _value_after(text, m.end(), convention)
        if value is not None:
            return value
    return None


def last_number(text: str) -> str | None:
    """Last signed decimal literal in ``text`` (currency symbols are not captured)."""
    found = _NUMBER_RE.findall(text)
    return found[-1] if found else None


def extract_answer(
    text: str,
    convention: Convention = "numeric",
    numeric_gold: bool = True,
) -> ExtractedAnswer:
    """Pull a final answer out of possibly truncated model output.

    ``numeric_gold=False`` together with the ``latex_math`` convention
    disables the bare-number fallback, which would otherwise pick a stray
    digit out of a symbolic answer.
    """
    if not text:
        return NO_ANSWER

    span = _boxed_span(text)
    if span is not None:
        return _answer(span, "boxed")

    span = _last_marker_value(_GSM8K_MARKER, text, convention)
    if span is not None:
        return _answer(span, "gsm8k_marker")

    span = _last_marker_value(_FINAL_PHRASE, text, convention)
    if span is not None:
        return _answer(span, "final_answer_phrase")

    if convention == "latex_math" and not numeric_gold:
        return NO_ANSWER
    span = last_number(text)
    if span is not None:
        return _answer(span, "last_number")
    return NO_ANSWER


def _answer(span: str, method: Method) -> ExtractedAnswer:
    value = normalize_answer(span)
    if not value:
        return NO_ANSWER
    return ExtractedAnswer(value=value, raw_span=span, method=method)


def has_final_marker(text: str) -> bool:
    return bool(_BOXED.search(text) or _GSM8K_MARKER.search(text) or _FINAL_PHRASE.search(text))


def _normalize_once(s: str) -> str:
    s = _SPACING_CMD.sub("", s).strip()
    s = s.rstrip(".").strip()
    if _GROUPED_NUMBER.match(s):
        return s.replace(",", "")
    m = _PLAIN_FRACTION.match(s)
    if m:
        num, den = int(m.group(1)), int(m.group(2))
        if den != 0:
            frac = Fraction(num, den)
            if frac.denominator == 1:
                return str(frac.numerator)
            return f"{frac.numerator}/{frac.denominator}"
        return s
    m = _LATEX_FRACTION.match(s)
    if m:
        sign = -1 if m.group(1) == "-" else 1
        num, den = int(m.group(2)), int(m.group(3))
        if den != 0:
            frac = sign * Fraction(num, den)
            if frac.denominator == 1:
                return str(frac.numerator)
            prefix = "-" if frac < 0 else ""
            return f"{prefix}\\frac{{{abs(frac.numerator)}}}{{{frac.denominator}}}"
    return s


def normalize_answer(raw: str) -> str:
    """Canonical form of an answer span; idempotent.

    >>> normalize_answer("1,234.")
    '1234'
    >>> normalize_answer(" \\\\frac{2}{4} ")
    '\\\\frac{1}{2}'
    """
    s = raw
    for _ in range(16):
        nxt = _normalize_once(s)
        if nxt == s:
            return s
        s = nxt
    return s


def _as_number(s: str) -> tuple[Fraction, bool] | None:
    """(value, is_decimal) for numeric literals, simple fractions included."""
    s = s.replace(",", "") if _GROUPED_NUMBER.match(s) else s
    if _INTEGER.match(s):
        return Fraction(int(s)), False
    if _DECIMAL.match(s):
        return Fraction(s), True
    m = _PLAIN_FRACTION.match(s)
    if m and int(m.group(2)) != 0:
        return Fraction(int(m.group(1)), int(m.group(2))), False
    m = _LATEX_FRACTION.match(s)
    if m and int(m.group(3)) != 0:
        sign = -1 if m.group(1) == "-" else 1
        return sign * Fraction(int(m.group(2)), int(m.group(3))), False
    return None


def answers_equivalent(a: str | None, b: str | None) -> bool:
    """Equality of answer classes used for scoring and voting."""
    if a is None or b is None:
        return False
    a, b = normalize_answer(a), normalize_answer(b)
    if a == b:
        return True
    pa, pb = _as_number(a), _as_number(b)
    if pa is None or pb is None:
        return False
    (va, dec_a), (vb, dec_b) = pa, pb
    if va == vb:
        return True
    if dec_a or dec_b:
        return math.isclose(float(va), float(vb), rel_tol=DECIMAL_REL_TOL, abs_tol=0.0)
    return False


def detect_natural_stop(
    tokens_generated: int,
    budget: int,
    strict_threshold: float = DEFAULT_STRICT_THRESHOLD,
    text: str | None = None,
) -> StopSignal:
    """Classify a generation as a natural stop or a budget hit.

    The non-strict predicate is ``tokens_generated < budget``; the strict one
    additionally requires ``tokens_generated < strict_threshold * budget``.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if tokens_generated < 0:
        raise ValueError(f"tokens_generated must be >= 0, got {tokens_generated}")
    if tokens_generated > budget:
        raise ValueError(f"tokens_generated {tokens_generated} exceeds budget {budget}")
    if not 0.0 < strict_threshold <= 1.0:
        raise ValueError(f"strict_threshold must lie in (0, 1], got {strict_threshold}")
    natural = tokens_generated < budget
    return StopSignal(
        tokens_generated=tokens_generated,
        budget=budget,
        stop_reason="natural" if natural else "budget_hit",
        strict=tokens_generated < strict_threshold * budget,
        has_final_marker=has_final_marker(text) if text else False,
        strict_threshold=strict_threshold,
    )
