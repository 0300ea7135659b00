"""Run records and the append-only checkpoint they persist to."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from ..extraction import _as_number, answers_equivalent, extract_answer
from ..orchestrator import PolicyOutcome
from .dataset import DataError

CellKey = tuple[str, "int | None", str]


@dataclass(frozen=True)
class RunRecord:
    item_id: str
    label: str
    budget: int | None
    gold: str
    outcome: PolicyOutcome | None
    correct: bool
    wall_time: float = field(default=0.0, compare=False)
    error: str | None = None
    error_kind: str | None = None
    convention: str = "numeric"

    @property
    def key(self) -> CellKey:
        return (self.label, self.budget, self.item_id)

    @property
    def ok(self) -> bool:
        return self.outcome is not None

    @classmethod
    def scored(
        cls, item_id: str, label: str, budget, gold: str, outcome: PolicyOutcome,
        wall_time: float = 0.0, convention: str = "numeric",
    ) -> "RunRecord":
        return cls(item_id, label, budget, gold, outcome, score(outcome, gold), wall_time, convention=convention)

    @classmethod
    def failed(cls, item_id: str, label: str, budget, gold: str, error: Exception, convention: str = "numeric") -> "RunRecord":
        kind = "retryable" if getattr(error, "retryable", False) else "fatal"
        return cls(item_id, label, budget, gold, None, False, 0.0, str(error), kind, convention)

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "label": self.label,
            "budget": self.budget,
            "gold": self.gold,
            "outcome": self.outcome.to_dict() if self.outcome else None,
            "correct": self.correct,
            "wall_time": self.wall_time,
            "error": self.error,
            "error_kind": self.error_kind,
            "convention": self.convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        outcome = PolicyOutcome.from_dict(d["outcome"]) if d.get("outcome") else None
        return cls(
            item_id=d["item_id"],
            label=d["label"],
            budget=d["budget"],
            gold=d["gold"],
            outcome=outcome,
            correct=d["correct"],
            wall_time=d.get("wall_time", 0.0),
            error=d.get("error"),
            error_kind=d.get("error_kind"),
            convention=d.get("convention", "numeric"),
        )

    def rescore(self) -> bool:
        """Re-extract every stage from its stored text and re-grade the final answer.

        Raises :class:`DataError` when a stored stage answer no longer matches
        its text; returns the recomputed correctness flag.
        """
        if self.outcome is None:
            return False
        numeric_gold = _as_number(self.gold) is not None
        for st in self.outcome.stages:
            again = extract_answer(st.text, self.convention, numeric_gold)
            if again != st.answer:
                raise DataError(f"{self.key}: stage {st.name!r} answer does not match its stored text")
        return score(self.outcome, self.gold)


def score(outcome: PolicyOutcome, gold: str) -> bool:
    return outcome.final_answer.found and answers_equivalent(outcome.final_answer.value, gold)


def _sort_key(k: CellKey):
    label, budget, item = k
    return (label, -1 if budget is None else budget, item)


class RunSet:
    """Completed records keyed by ``(label, budget, item_id)``; later records win."""

    def __init__(self, records: Iterable[RunRecord] = (), complete: bool = True):
        self._records: dict[CellKey, RunRecord] = {}
        for r in records:
            self._records[r.key] = r
        self.complete = complete

    def add(self, r: RunRecord) -> None:
        self._records[r.key] = r

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[RunRecord]:
        for k in sorted(self._records, key=_sort_key):
            yield self._records[k]

    def __contains__(self, key: CellKey) -> bool:
        return key in self._records

    def get(self, key: CellKey) -> RunRecord | None:
        return self._records.get(key)

    def done(self, key: CellKey) -> bool:
        r = self._records.get(key)
        return r is not None and r.ok

    def cells(self) -> list[tuple[str, int | None]]:
        return sorted({(r.label, r.budget) for r in self._records.values()}, key=lambda c: _sort_key((*c, "")))

    def labels(self) -> list[str]:
        return sorted({r.label for r in self._records.values()})

    def budgets(self, label: str) -> list[int | None]:
        return [b for lab, b in self.cells() if lab == label]

    def cell(self, label: str, budget: int | None) -> list[RunRecord]:
        return [r for r in self if r.label == label and r.budget == budget]

    def errors(self) -> list[RunRecord]:
        return [r for r in self if not r.ok]


class Checkpoint:
    """Append-only JSONL of run records plus a manifest carrying the spec hash.

    Only one thread writes (the sweep's collector), but appends are locked
    anyway so the object is safe to share.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.manifest_path = self.path.with_name(self.path.name + ".manifest.json")
        self._lock = threading.Lock()

    def open(self, spec_hash: str, spec: dict | None = None) -> None:
        """Create or validate the manifest for this checkpoint."""
        if self.manifest_path.exists():
            manifest = json.loads(self.manifest_path.read_text())
            if manifest.get("spec_hash") != spec_hash:
                raise DataError(
                    f"checkpoint {self.path} was written by a different sweep spec "
                    f"({manifest.get('spec_hash')} != {spec_hash})"
                )
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(json.dumps({"spec_hash": spec_hash, "spec": spec}, sort_keys=True, indent=2))

    def load(self) -> RunSet:
        if not self.path.exists():
            return RunSet()
        raw = self.path.read_bytes()
        lines = raw.split(b"\n")
        # a crash mid-append leaves an unterminated last line; drop it
        if lines and lines[-1] != b"":
            self._truncate_to(len(raw) - len(lines[-1]))
        records = []
        for n, line in enumerate(lines[:-1]):
            if not line.strip():
                continue
            try:
                rec = RunRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{self.path}: line {n + 1} is corrupt ({exc})") from exc
            try:
                fresh = rec.rescore()
            except DataError as exc:
                raise DataError(f"{self.path}: line {n + 1}: {exc}") from exc
            if rec.ok and fresh != rec.correct:
                raise DataError(f"{self.path}: line {n + 1} stored correct={rec.correct} but rescoring gives {fresh}")
            records.append(rec)
        return RunSet(records)

    def _truncate_to(self, size: int) -> None:
        with open(self.path, "r+b") as fh:
            fh.truncate(size)

    def append(self, record: RunRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)


def load_runset(path: str | Path) -> RunSet:
    return Checkpoint(path).load()
