"""JSONL question sets in GSM8K / MATH-500 shape."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..extraction import _as_number, _boxed_span, normalize_answer


class DataError(ValueError):
    """Malformed input data (bad line, duplicate id, inconsistent checkpoint)."""


@dataclass(frozen=True)
class DatasetItem:
    id: str
    question: str
    gold: str
    convention: str = "numeric"

    @property
    def numeric_gold(self) -> bool:
        return _as_number(self.gold) is not None


def parse_gold(answer: str) -> str:
    """Gold answer from a reference solution: text after the last ``####``,
    else the last boxed directive, else the whole string; then normalized."""
    if "####" in answer:
        raw = answer.rsplit("####", 1)[1].strip().split("\n", 1)[0]
    else:
        raw = _boxed_span(answer) or answer
    return normalize_answer(raw)


def load_dataset(
    path: str | Path,
    format: str = "jsonl",
    convention: str = "numeric",
    start: int | None = None,
    stop: int | None = None,
) -> list[DatasetItem]:
    """Read ``{id?, question, answer}`` lines; ``start``/``stop`` slice by line index."""
    if format != "jsonl":
        raise DataError(f"unsupported dataset format {format!r}")
    items: list[DatasetItem] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                question = row["question"]
                answer = row["answer"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"line {lineno + 1}: malformed record ({exc})") from exc
            qid = str(row.get("id", lineno))
            if qid in seen:
                raise DataError(f"line {lineno + 1}: duplicate id {qid!r} (first seen on line {seen[qid]})")
            seen[qid] = lineno + 1
            items.append(
                DatasetItem(
                    id=qid,
                    question=str(question),
                    gold=parse_gold(str(answer)),
                    convention=row.get("convention", convention),
                )
            )
    return items[start:stop]


def synthetic_dataset(n: int, backend=None, prefix: str = "q") -> list[DatasetItem]:
    """Placeholder questions for simulated runs.

    With a simulated ``backend`` the golds are the ones it draws for each id.
    """
    if backend is not None and not hasattr(backend, "question"):
        raise DataError("synthetic questions need a simulated backend; supply a dataset file instead")
    items = []
    for i in range(n):
        qid = f"{prefix}{i}"
        gold = backend.question(qid)[2] if backend is not None else ""
        items.append(DatasetItem(id=qid, question=f"question {i}", gold=gold))
    return items
