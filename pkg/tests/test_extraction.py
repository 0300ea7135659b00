import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from thinktax.extraction import (
    NO_ANSWER,
    ExtractedAnswer,
    StopSignal,
    answers_equivalent,
    detect_natural_stop,
    extract_answer,
    has_final_marker,
    last_number,
    normalize_answer,
)

CORPUS = json.loads((Path(__file__).parent / "data" / "extraction_corpus.json").read_text())


@pytest.mark.parametrize("case", CORPUS, ids=[c["name"] for c in CORPUS])
def test_corpus(case):
    got = extract_answer(case["text"], case.get("convention", "numeric"), case.get("numeric_gold", True))
    assert got.value == case["value"]
    assert got.method == case["method"]


def test_corpus_covers_every_level():
    assert {c["method"] for c in CORPUS} == {"boxed", "gsm8k_marker", "final_answer_phrase", "last_number", "none"}
    assert len(CORPUS) == 40


def test_none_method_iff_no_value():
    with pytest.raises(ValueError):
        ExtractedAnswer(value=None, raw_span=None, method="boxed")
    with pytest.raises(ValueError):
        ExtractedAnswer(value="1", raw_span="1", method="none")
    assert not NO_ANSWER.found


def test_roundtrip_dict():
    a = extract_answer("#### 1,000")
    assert ExtractedAnswer.from_dict(a.to_dict()) == a
    assert a.raw_span == "1,000"


@pytest.mark.parametrize(
    "raw, canon",
    [
        ("1,234", "1234"),
        ("1,234.50", "1234.50"),
        ("12.", "12"),
        ("3/6", "1/2"),
        ("-4/2", "-2"),
        ("\\frac{2}{4}", "\\frac{1}{2}"),
        ("-\\frac{9}{3}", "-3"),
        ("\\tfrac{3}{9}", "\\frac{1}{3}"),
        ("1\\,000", "1000"),
        ("\\quad 5", "5"),
        ("x+1", "x+1"),
        ("1/0", "1/0"),
    ],
)
def test_normalize(raw, canon):
    assert normalize_answer(raw) == canon


@given(st.text(max_size=40))
def test_normalize_idempotent(s):
    once = normalize_answer(s)
    assert normalize_answer(once) == once


@pytest.mark.parametrize(
    "a, b, eq",
    [
        ("42", "42", True),
        ("42", "42.0", True),
        ("0.5", "1/2", True),
        ("\\frac{1}{2}", "0.5", True),
        ("2/4", "\\frac{1}{2}", True),
        ("1,000", "1000", True),
        ("0.1", "0.10000000001", True),
        ("0.1", "0.1001", False),
        ("3", "4", False),
        ("x", "x", True),
        ("x", "y", False),
        (None, "1", False),
    ],
)
def test_equivalence(a, b, eq):
    assert answers_equivalent(a, b) is eq


@given(st.integers(-10**9, 10**9), st.integers(1, 10**6))
def test_fraction_equivalence_matches_rational_arithmetic(p, q):
    from fractions import Fraction

    f = Fraction(p, q)
    assert answers_equivalent(f"{p}/{q}", f"{f.numerator}/{f.denominator}")
    assert answers_equivalent(f"\\frac{{{abs(p)}}}{{{q}}}", f"{abs(f.numerator)}/{f.denominator}")


def test_last_number_rules():
    assert last_number("a1b 2.5 and 3") == "3"
    assert last_number("v2 only") is None
    assert last_number("approx 1.5e3") == "1.5"
    assert last_number("") is None


def test_has_final_marker():
    assert has_final_marker("#### 3")
    assert has_final_marker("\\boxed{")
    assert has_final_marker("the final answer is")
    assert not has_final_marker("just 3")


def _segment(kind, value):
    if kind == "boxed":
        return f" so \\boxed{{{value}}} "
    if kind == "gsm8k":
        return f"\n#### {value}\n"
    if kind == "phrase":
        return f" The final answer is {value}. "
    return f" we had {value} "


LEVEL_OF = {"boxed": 0, "gsm8k": 1, "phrase": 2, "plain": 3}
METHOD_OF = {"boxed": "boxed", "gsm8k": "gsm8k_marker", "phrase": "final_answer_phrase", "plain": "last_number"}


@given(
    st.lists(
        st.tuples(st.sampled_from(sorted(LEVEL_OF)), st.integers(0, 10**6)),
        min_size=1,
        max_size=6,
    )
)
def test_level_precedence_on_composites(parts):
    text = "".join(_segment(k, v) for k, v in parts)
    best = min(LEVEL_OF[k] for k, _ in parts)
    kind = next(k for k in LEVEL_OF if LEVEL_OF[k] == best)
    if kind == "plain":
        # the last number anywhere wins, whichever segment it sits in
        expected = str(parts[-1][1])
    else:
        expected = str([v for k, v in parts if k == kind][-1])
    got = extract_answer(text)
    assert got.method == METHOD_OF[kind]
    assert got.value == expected


def test_stop_detection():
    s = detect_natural_stop(95, 100, 0.95, "#### 1")
    assert s.natural and not s.strict and s.has_final_marker
    s = detect_natural_stop(100, 100)
    assert not s.natural and s.stop_reason == "budget_hit"
    assert detect_natural_stop(10, 100).strict
    assert StopSignal.from_dict(s.to_dict()) == s
    with pytest.raises(ValueError):
        detect_natural_stop(101, 100)
    with pytest.raises(ValueError):
        detect_natural_stop(1, 0)
